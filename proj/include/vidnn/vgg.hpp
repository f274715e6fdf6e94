#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vidnn/model.hpp"

namespace vidnn {

enum class VggHead { none, person_classifier };

namespace detail {

// The 13-conv/5-pool VGG16 plan: filters per conv, pool after each block.
struct VggConvSpec {
    const char* name;
    int filters;
    bool pool_after;  // last conv of its block
};

inline const std::vector<VggConvSpec>& vgg16_plan() {
    static const std::vector<VggConvSpec> plan = {
        {"conv1_1", 64, false},  {"conv1_2", 64, true},
        {"conv2_1", 128, false}, {"conv2_2", 128, true},
        {"conv3_1", 256, false}, {"conv3_2", 256, false}, {"conv3_3", 256, true},
        {"conv4_1", 512, false}, {"conv4_2", 512, false}, {"conv4_3", 512, true},
        {"conv5_1", 512, false}, {"conv5_2", 512, false}, {"conv5_3", 512, true},
    };
    return plan;
}

}  // namespace detail

/// Builds the VGG16 convolution stack (3x3 same-padded convs with relu,
/// 2x2 stride-2 pools) ending in a flatten. With `person_classifier` the
/// canonical FC6/FC7 (4096, relu) and an FC8 softmax head are appended;
/// `head_classes` sizes FC8 (2 for the person-vs-background task).
/// `conv_layers` < 13 keeps only the leading convolutions (each started
/// block still closes with its pool), for desk-scale models.
inline Model build_vgg16(const Shape& input_shape, VggHead head, int head_classes = 2, int conv_layers = 13) {
    if (input_shape.size() != 3)
        throw DimensionError("build_vgg16: input must be [H,W,C], got " + shape_str(input_shape));
    if (conv_layers < 1 || conv_layers > 13)
        throw StructureError("build_vgg16: conv_layers must be in [1,13], got " + std::to_string(conv_layers));

    const auto& plan = detail::vgg16_plan();
    int pools = 0;
    for (int i = 0; i < conv_layers; ++i)
        if (plan[static_cast<std::size_t>(i)].pool_after || i == conv_layers - 1) ++pools;
    const int min_extent = 1 << pools;
    if (input_shape[0] < min_extent || input_shape[1] < min_extent)
        throw DimensionError("build_vgg16: input " + shape_str(input_shape) + " too small for " +
                             std::to_string(pools) + " pooling stages (needs >= " + std::to_string(min_extent) +
                             " per side)");

    Model m(input_shape);
    int in_channels = input_shape[2];
    int pool_idx = 0;
    for (int i = 0; i < conv_layers; ++i) {
        const auto& spec = plan[static_cast<std::size_t>(i)];
        m.add(std::make_unique<Conv2d>(spec.name, in_channels, spec.filters, 3, 1, Padding::same, Act::relu));
        in_channels = spec.filters;
        if (spec.pool_after || i == conv_layers - 1)
            m.add(std::make_unique<MaxPool2d>("pool" + std::to_string(++pool_idx), 2, 2));
    }
    m.add(std::make_unique<Flatten>("flatten"));

    if (head == VggHead::person_classifier) {
        const int flat = m.infer_output_shape()[0];
        m.add(std::make_unique<Dense>("FC6", flat, 4096, Act::relu));
        m.add(std::make_unique<Dense>("FC7", 4096, 4096, Act::relu));
        m.add(std::make_unique<Dense>("FC8", 4096, head_classes, Act::softmax));
    }
    m.validate_names();
    m.infer_output_shape();
    return m;
}

/// Removes FC6/FC7/FC8, leaving the feature extractor that ends at the
/// flatten layer. Retained parameters are moved, never copied or touched.
inline Model truncate_head(Model&& m) {
    for (const char* required : {"FC6", "FC7", "FC8"})
        if (!m.find_layer(required))
            throw StructureError(std::string("truncate_head: model has no layer named '") + required + "'");

    Model out(m.input_shape());
    for (auto& l : m.layers()) {
        const std::string& n = l->name();
        if (n == "FC6" || n == "FC7" || n == "FC8") continue;
        out.add(std::move(l));
    }
    if (out.layer_count() == 0 || std::string(out.layer(out.layer_count() - 1).type()) != "flatten")
        throw StructureError("truncate_head: expected the remaining model to end at a flatten layer");
    return out;
}

/// time_distributed(backbone) -> BiGRU -> dense(fc0, relu) -> dense(fc1, relu)
/// -> dense(classes, softmax). The backbone must be headless (ends in a
/// vector); newly added layers are initialized from `rng`, backbone
/// parameters are preserved.
inline Model assemble_bigru_cnn(Model&& backbone, int gru_units, int fc0, int fc1, int classes, int t_frames,
                                Rng& rng, float dropout = 0.0f) {
    if (t_frames < 1) throw StructureError("assemble_bigru_cnn: T must be >= 1");
    for (const char* fc : {"FC6", "FC7", "FC8"})
        if (backbone.find_layer(fc))
            throw StructureError("assemble_bigru_cnn: backbone still has head layer '" + std::string(fc) + "'");
    Shape feat = backbone.infer_output_shape();
    if (feat.size() != 1)
        throw StructureError("assemble_bigru_cnn: backbone must emit a vector, got " + shape_str(feat));
    const int feat_dim = feat[0];

    Shape in = backbone.input_shape();
    Shape model_in{t_frames};
    model_in.insert(model_in.end(), in.begin(), in.end());

    Model m(model_in);
    m.add(std::make_unique<TimeDistributed>("td", std::move(backbone)));
    auto bigru = std::make_unique<BiGruLayer>("bigru", feat_dim, gru_units);
    bigru->init(rng);
    m.add(std::move(bigru));
    auto d1 = std::make_unique<Dense>("fc1", 2 * gru_units, fc0, Act::relu);
    d1->init(rng);
    m.add(std::move(d1));
    if (dropout > 0.0f) m.add(std::make_unique<Dropout>("drop1", dropout));
    auto d2 = std::make_unique<Dense>("fc2", fc0, fc1, Act::relu);
    d2->init(rng);
    m.add(std::move(d2));
    if (dropout > 0.0f) m.add(std::make_unique<Dropout>("drop2", dropout));
    auto d3 = std::make_unique<Dense>("predictions", fc1, classes, Act::softmax);
    d3->init(rng);
    m.add(std::move(d3));

    m.validate_names();
    m.infer_output_shape();
    return m;
}

}  // namespace vidnn
