#include "stad/net.hpp"

#include <cmath>
#include <string>

#include "stad/kernels.hpp"

namespace stad {

namespace {

Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const float a = std::sqrt(1.0f / static_cast<float>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng.uniform(-a, a);
    return t;
}

int scaled_channels(int c, float width) {
    if (width == 1.0f) return c;
    const int scaled = static_cast<int>(std::lround(static_cast<double>(c) * width / 4.0)) * 4;
    return std::max(4, scaled);
}

void add_conv_params(ParamStore& params, int idx, int in_ch, const LayerSpec& l, Rng& rng) {
    const std::string base = "conv" + std::to_string(idx);
    const int fan_in = in_ch * l.kernel * l.kernel;
    params.add(base + ".w", init_uniform({l.out_channels, in_ch, l.kernel, l.kernel}, fan_in, rng));
    params.add(base + ".b", Tensor({l.out_channels}));
}

}  // namespace

bool supported_patch_size(int p) { return p == 17 || p == 33 || p == 65; }

PatchNet build_teacher_patch_net(int p, int d, Rng& rng, float width) {
    if (!supported_patch_size(p))
        throw ConfigError("unsupported receptive field " + std::to_string(p) +
                          " (supported: 17, 33, 65)");
    if (d < 1) throw ConfigError("descriptor dimension must be positive");

    PatchNet net;
    net.patch_size = p;
    net.descriptor_dim = d;
    net.width = width;

    auto conv = [&](int kernel, int out_ch, bool act) {
        LayerSpec l;
        l.kind = LayerKind::Conv;
        l.kernel = kernel;
        l.out_channels = out_ch;
        l.activation = act;
        net.layers.push_back(l);
    };
    auto pool = [&] {
        LayerSpec l;
        l.kind = LayerKind::MaxPool;
        l.kernel = 2;
        l.stride = 2;
        net.layers.push_back(l);
    };

    const auto ch = [&](int c) { return scaled_channels(c, width); };
    switch (p) {
        case 65:
            // 65 -> 61 -> 30 -> 26 -> 13 -> 9 -> 4 -> 1 -> 1
            conv(5, ch(128), true);
            pool();
            conv(5, ch(128), true);
            pool();
            conv(5, ch(256), true);
            pool();
            conv(4, ch(256), true);
            conv(1, d, false);
            break;
        case 33:
            // 33 -> 31 -> 15 -> 11 -> 5 -> 4 -> 1
            conv(3, ch(128), true);
            pool();
            conv(5, ch(256), true);
            pool();
            conv(2, ch(256), true);
            conv(4, d, false);
            break;
        case 17:
            // 17 -> 12 -> 8 -> 4 -> 1
            conv(6, ch(128), true);
            conv(5, ch(256), true);
            conv(5, ch(256), true);
            conv(4, d, false);
            break;
    }

    int in_ch = 3;
    int conv_idx = 0;
    for (const auto& l : net.layers) {
        if (l.kind != LayerKind::Conv) continue;
        add_conv_params(net.params, ++conv_idx, in_ch, l, rng);
        in_ch = l.out_channels;
    }
    return net;
}

std::vector<int> PatchNet::shape_trace() const {
    std::vector<int> trace{patch_size};
    int s = patch_size;
    for (const auto& l : layers) {
        s = kernels::conv_out_extent(s, l.kernel, l.stride, l.dilation);
        trace.push_back(s);
    }
    return trace;
}

Tensor PatchNet::forward(const Tensor& patch) const {
    require_shape(patch, {3, patch_size, patch_size}, "patch input");
    Tensor x = patch;
    int conv_idx = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) {
            const std::string base = "conv" + std::to_string(++conv_idx);
            x = kernels::conv2d_forward(x, params.find(base + ".w")->value,
                                        params.find(base + ".b")->value, l.stride, l.dilation);
            if (l.activation) x = kernels::leaky_relu_forward(x, l.act_slope);
        } else {
            x = kernels::maxpool2d_forward(x, nullptr, l.kernel, l.stride, l.dilation);
        }
    }
    require_shape(x, {descriptor_dim, 1, 1}, "patch descriptor");
    return Tensor::from({descriptor_dim},
                        std::vector<float>(x.data(), x.data() + x.numel()));
}

Graph::Id PatchNet::forward_graph(Graph& g, Graph::Id input,
                                  const std::vector<Graph::Id>& param_ids) const {
    Graph::Id x = input;
    size_t pi = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) {
            x = g.conv2d(x, param_ids.at(pi), param_ids.at(pi + 1), l.stride, l.dilation);
            pi += 2;
            if (l.activation) x = g.leaky_relu(x, l.act_slope);
        } else {
            x = g.maxpool2d(x, l.kernel, l.stride, l.dilation);
        }
    }
    return x;
}

PatchNet PatchNet::clone_architecture(Rng& rng) const {
    PatchNet fresh;
    fresh.patch_size = patch_size;
    fresh.descriptor_dim = descriptor_dim;
    fresh.width = width;
    fresh.layers = layers;
    int in_ch = 3;
    int conv_idx = 0;
    for (const auto& l : fresh.layers) {
        if (l.kind != LayerKind::Conv) continue;
        add_conv_params(fresh.params, ++conv_idx, in_ch, l, rng);
        in_ch = l.out_channels;
    }
    return fresh;
}

DenseNet densify(const PatchNet& net) {
    DenseNet dn;
    dn.patch_size = net.patch_size;
    dn.descriptor_dim = net.descriptor_dim;
    // Accumulated pooling stride becomes the dilation of everything after the
    // pool; the pool itself drops to stride 1 so no phase is discarded.
    int phase = 1;
    for (const auto& l : net.layers) {
        LayerSpec t = l;
        if (l.kind == LayerKind::Conv) {
            t.dilation = l.dilation * phase;
            t.stride = 1;
        } else {
            t.dilation = l.dilation * phase;
            t.stride = 1;
            phase *= l.stride;
        }
        dn.layers.push_back(t);
    }
    // Shallow tensor copies: the dense form shares parameter storage.
    for (int i = 0; i < net.params.size(); ++i) {
        const auto& e = net.params.entry(i);
        ParamStore::Entry copy{e.name, e.value, e.grad};
        dn.params.add(copy.name, copy.value);
    }
    return dn;
}

Tensor DenseNet::run_valid(const Tensor& image) const {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("dense input must be [3,h,w]");
    if (image.dim(1) < patch_size || image.dim(2) < patch_size)
        throw ShapeError("dense input smaller than receptive field " +
                         std::to_string(patch_size));
    Tensor x = image;
    int conv_idx = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) {
            const std::string base = "conv" + std::to_string(++conv_idx);
            x = kernels::conv2d_forward(x, params.find(base + ".w")->value,
                                        params.find(base + ".b")->value, l.stride, l.dilation);
            if (l.activation) x = kernels::leaky_relu_forward(x, l.act_slope);
        } else {
            x = kernels::maxpool2d_forward(x, nullptr, l.kernel, l.stride, l.dilation);
        }
    }
    return x;
}

Graph::Id DenseNet::run_valid_graph(Graph& g, Graph::Id input,
                                    const std::vector<Graph::Id>& param_ids) const {
    Graph::Id x = input;
    size_t pi = 0;
    for (const auto& l : layers) {
        if (l.kind == LayerKind::Conv) {
            x = g.conv2d(x, param_ids.at(pi), param_ids.at(pi + 1), l.stride, l.dilation);
            pi += 2;
            if (l.activation) x = g.leaky_relu(x, l.act_slope);
        } else {
            x = g.maxpool2d(x, l.kernel, l.stride, l.dilation);
        }
    }
    return x;
}

Tensor reflect_pad(const Tensor& image, int pad) {
    if (image.ndim() != 3) throw ShapeError("reflect_pad: input must be [C,h,w]");
    const int C = image.dim(0), H = image.dim(1), W = image.dim(2);
    if (pad >= H || pad >= W)
        throw ShapeError("reflect_pad: pad " + std::to_string(pad) +
                         " too large for image " + Tensor::shape_str(image.shape()));
    if (pad == 0) return image;
    Tensor out({C, H + 2 * pad, W + 2 * pad});
    const float* ip = image.data();
    float* op = out.data();
    const int Ho = H + 2 * pad, Wo = W + 2 * pad;
    auto mirror = [pad](int i, int n) {
        int j = i - pad;
        if (j < 0) j = -j;
        if (j >= n) j = 2 * n - 2 - j;
        return j;
    };
    for (int c = 0; c < C; ++c) {
        for (int y = 0; y < Ho; ++y) {
            const int sy = mirror(y, H);
            for (int x = 0; x < Wo; ++x)
                op[(c * Ho + y) * Wo + x] = ip[(c * H + sy) * W + mirror(x, W)];
        }
    }
    return out;
}

Tensor extract_dense(const DenseNet& net, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("extract_dense: input must be [3,h,w]");
    const int h = image.dim(1), w = image.dim(2);
    if (h < net.patch_size || w < net.patch_size)
        throw ShapeError("extract_dense: image smaller than receptive field");
    const int pad = (net.patch_size - 1) / 2;
    Tensor out = net.run_valid(reflect_pad(image, pad));
    require_shape(out, {net.descriptor_dim, h, w}, "dense descriptor map");
    return out;
}

Tensor extract_dense_reference(const PatchNet& net, const Tensor& image) {
    const int h = image.dim(1), w = image.dim(2);
    const int p = net.patch_size;
    const int pad = (p - 1) / 2;
    Tensor padded = reflect_pad(image, pad);
    const int Hp = padded.dim(1), Wp = padded.dim(2);
    Tensor out({net.descriptor_dim, h, w});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            Tensor patch({3, p, p});
            for (int ch = 0; ch < 3; ++ch)
                for (int y = 0; y < p; ++y)
                    for (int x = 0; x < p; ++x)
                        patch.at((ch * p + y) * p + x) =
                            padded.at((ch * Hp + r + y) * Wp + c + x);
            Tensor desc = net.forward(patch);
            for (int k = 0; k < net.descriptor_dim; ++k)
                out.at((k * h + r) * w + c) = desc.at(k);
        }
    }
    return out;
}

Decoder build_decoder(int in_dim, int out_dim, Rng& rng) {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("decoder dimensions must be positive");
    Decoder dec;
    dec.in_dim = in_dim;
    dec.out_dim = out_dim;
    dec.params.add("decode.w", init_uniform({out_dim, in_dim}, in_dim, rng));
    dec.params.add("decode.b", Tensor({out_dim}));
    return dec;
}

Tensor Decoder::apply(const Tensor& descriptor) const {
    return kernels::linear_forward(descriptor, params.find("decode.w")->value,
                                   params.find("decode.b")->value);
}

Graph::Id Decoder::apply_graph(Graph& g, Graph::Id x,
                               const std::vector<Graph::Id>& param_ids) const {
    return g.linear(x, param_ids.at(0), param_ids.at(1));
}

}  // namespace stad
