#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crossgram/tensor.hpp"

namespace crossgram {

// Named ReLU taps of the VGG-style stack, ordered by network depth.
// (Pooling stages sit between blocks; they are structural entries of
// EncoderSpec rather than tappable layers.)
enum class LayerId : uint8_t {
  R11, R12,
  R21, R22,
  R31, R32, R33, R34,
  R41, R42, R43, R44,
  R51, R52, R53, R54,
};

// Position in the forward order; usable for finer/coarser comparisons.
int layer_depth(LayerId id);
std::string layer_name(LayerId id);
// Parses "R42" style names; throws ConfigError on anything else.
LayerId parse_layer(const std::string& name);

struct EncoderLayer {
  enum class Kind { Conv, Pool } kind = Kind::Conv;

  // Conv stages only.
  LayerId tap = LayerId::R11;      // id of the post-activation output
  std::string weightName;          // e.g. "conv3_2"
  int inChannels = 0;
  int outChannels = 0;
  int kernelSize = 3;
  int padding = 1;
  bool applyRelu = true;
  Kernel weight;
  std::vector<float> bias;
};

// Fixed (non-trainable) feature extractor: an ordered conv/pool stack with
// a per-channel affine preprocess applied to the image before the first
// conv. Immutable once weights are bound; safe to share across threads.
struct EncoderSpec {
  std::vector<EncoderLayer> layers;
  PoolMode poolMode = PoolMode::Max;
  std::array<float, 3> preprocMean{0.0f, 0.0f, 0.0f};
  std::array<float, 3> preprocStd{1.0f, 1.0f, 1.0f};
  bool weightsBound = false;

  bool hasTap(LayerId id) const;
  // Index into layers of the conv stage producing the tap.
  int layerIndexOf(LayerId id) const;
  int channelsAt(LayerId id) const;
  std::map<LayerId, int> widthMap() const;
  int poolCount() const;

  // VGG-style topology: per-block 3x3 convs with ReLU, 2x2 pooling between
  // blocks. convsPerBlock {2,2,4,4,1} with widths {64,128,256,512,512}
  // reproduces the standard stack truncated after R51.
  static EncoderSpec vgg(const std::array<int, 5>& widths,
                         const std::array<int, 5>& convsPerBlock,
                         PoolMode mode = PoolMode::Max,
                         std::array<float, 3> mean = {0.5f, 0.5f, 0.5f},
                         std::array<float, 3> std = {0.5f, 0.5f, 0.5f});

  // Linear stack of 1x1 convs, one per block, no ReLU and no pooling.
  // With orthonormal-column weights the whole stack is analytically
  // invertible, which the exact-inverse fixture decoders rely on.
  static EncoderSpec ortho1x1(const std::array<int, 5>& widths,
                              std::array<float, 3> mean = {0.5f, 0.5f, 0.5f},
                              std::array<float, 3> std = {0.5f, 0.5f, 0.5f});
};

// Everything one forward pass produced: per-stage outputs plus the pool
// routing indices the backward pass needs.
struct ActivationTrace {
  Image input;
  FeatureMap preprocessed;
  std::vector<FeatureMap> stageOutputs;        // one per EncoderSpec layer
  std::vector<std::vector<int32_t>> poolArgmax; // parallel to layers
  std::map<LayerId, int> tapStage;             // requested taps only

  const FeatureMap& at(LayerId id) const;
  bool tapped(LayerId id) const { return tapStage.count(id) != 0; }
};

// Reads a CGWT file and binds conv weights/biases plus preproc.mean/std
// onto the spec. Rejects bad magic, truncation, missing or unexpected
// tensors, and shape mismatches, each with the offending tensor named.
void load_weights(const std::string& path, EncoderSpec& spec);
void save_weights(const std::string& path, const EncoderSpec& spec);

ActivationTrace forward(const EncoderSpec& spec, const Image& image,
                        const std::set<LayerId>& taps);

// Sum of vector-Jacobian products from the given tap cotangents down to
// the input pixels, including the preprocessing affine map.
Image backward_to_image(const EncoderSpec& spec, const ActivationTrace& trace,
                        const std::map<LayerId, FeatureMap>& cotangents);

// Spatial dims of every stage output for an H x W input.
std::vector<std::pair<int, int>> stage_dims(const EncoderSpec& spec, int height,
                                            int width);

} // namespace crossgram
