#pragma once

#include <optional>
#include <vector>

#include "stad/graph.hpp"
#include "stad/optim.hpp"
#include "stad/rng.hpp"
#include "stad/tensor.hpp"

namespace stad {

enum class LayerKind { Conv, MaxPool };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    int out_channels = 0;   // conv only
    bool activation = false;
    float act_slope = 5e-3f;
};

// Patch-sized descriptor network: a [3,p,p] input maps to exactly one
// d-dimensional descriptor. Convolutions are valid (no padding), stride 1;
// spatial reduction comes from strided max-pools and kernel extents.
struct PatchNet {
    int patch_size = 0;
    int descriptor_dim = 0;
    float width = 1.0f;
    std::vector<LayerSpec> layers;
    ParamStore params;

    Tensor forward(const Tensor& patch) const;  // [3,p,p] -> [d]
    Graph::Id forward_graph(Graph& g, Graph::Id input,
                            const std::vector<Graph::Id>& param_ids) const;

    // Same layer stack, freshly initialized parameters.
    PatchNet clone_architecture(Rng& rng) const;

    // Intermediate spatial extents after each layer for a p x p input,
    // starting with p itself.
    std::vector<int> shape_trace() const;
};

// Receptive fields with published architectures.
bool supported_patch_size(int p);

// Builds the teacher/student architecture for p in {17,33,65}. `width` scales
// the hidden channel counts (1.0 reproduces the published stacks); the
// descriptor dimension d is independent of width.
PatchNet build_teacher_patch_net(int p, int d, Rng& rng, float width = 1.0f);

// Patch network transformed for dense evaluation: pools run at stride 1 and
// later layers pick up the accumulated pooling stride as dilation, so one
// pass over an image equals the patchwise sliding-window evaluation at every
// valid offset. Parameters alias the source network's tensors.
struct DenseNet {
    int patch_size = 0;
    int descriptor_dim = 0;
    std::vector<LayerSpec> layers;
    ParamStore params;  // shares storage with the source PatchNet

    // [3,h,w] -> [d, h-p+1, w-p+1], no padding.
    Tensor run_valid(const Tensor& image) const;
    Graph::Id run_valid_graph(Graph& g, Graph::Id input,
                              const std::vector<Graph::Id>& param_ids) const;
};

DenseNet densify(const PatchNet& net);

// Mirror-pads (edge pixel not repeated) by (p-1)/2 per side, then evaluates
// densely: output is [d,h,w], one descriptor per input pixel.
Tensor extract_dense(const DenseNet& net, const Tensor& image);

// Sliding-window reference: forward_patch at every pixel of the padded image.
// Exact but slow; kept as the ground truth the fast transform is tested
// against.
Tensor extract_dense_reference(const PatchNet& net, const Tensor& image);

Tensor reflect_pad(const Tensor& image, int pad);

// Linear decoder lifting a descriptor to an external target dimension.
struct Decoder {
    int in_dim = 0;
    int out_dim = 0;
    ParamStore params;  // "decode.w" [out,in], "decode.b" [out]

    Tensor apply(const Tensor& descriptor) const;  // [in] or [B,in]
    Graph::Id apply_graph(Graph& g, Graph::Id x,
                          const std::vector<Graph::Id>& param_ids) const;
};

Decoder build_decoder(int in_dim, int out_dim, Rng& rng);

}  // namespace stad
