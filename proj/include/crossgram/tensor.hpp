#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace crossgram {

// One layer's activations: channels x height x width, row-major CHW,
// single precision.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int c, int h, int w)
      : channels(c), height(h), width(w),
        data(static_cast<size_t>(c) * h * w, 0.0f) {}

  int sites() const { return height * width; }
  size_t size() const { return data.size(); }

  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  bool sameShape(const FeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  std::string shapeString() const;
};

// RGB image, CHW float storage. Values are nominally in [0,1] but are
// allowed to leave that range while an optimizer owns the pixels; the
// same struct is reused for image-shaped gradients.
struct Image {
  static constexpr int kChannels = 3;

  int height = 0;
  int width = 0;
  std::vector<float> data;

  Image() = default;
  Image(int h, int w)
      : height(h), width(w),
        data(static_cast<size_t>(kChannels) * h * w, 0.0f) {}

  size_t size() const { return data.size(); }
  float& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }

  FeatureMap toFeatureMap() const;
  static Image fromFeatureMap(const FeatureMap& f);
};

// Convolution weights, [outC, inC, kH, kW] row-major.
struct Kernel {
  int outChannels = 0;
  int inChannels = 0;
  int kh = 0;
  int kw = 0;
  std::vector<float> data;

  Kernel() = default;
  Kernel(int oc, int ic, int h, int w)
      : outChannels(oc), inChannels(ic), kh(h), kw(w),
        data(static_cast<size_t>(oc) * ic * h * w, 0.0f) {}

  size_t size() const { return data.size(); }
  float& at(int oc, int ic, int y, int x) {
    return data[((static_cast<size_t>(oc) * inChannels + ic) * kh + y) * kw + x];
  }
  float at(int oc, int ic, int y, int x) const {
    return data[((static_cast<size_t>(oc) * inChannels + ic) * kh + y) * kw + x];
  }
  std::string shapeString() const;
};

// Per-side zero padding plus stride. Both spatial axes share the stride.
struct Conv2dGeometry {
  int padTop = 0;
  int padBottom = 0;
  int padLeft = 0;
  int padRight = 0;
  int stride = 1;

  static Conv2dGeometry same(int pad, int stride = 1) {
    return Conv2dGeometry{pad, pad, pad, pad, stride};
  }
};

struct ConvGrads {
  FeatureMap input;
  Kernel kernel;
  std::vector<float> bias;
};

// Cross-correlation (no kernel flip). Output spatial dims:
// floor((in + padA + padB - k)/stride) + 1. The reduction feeding each
// output element runs in a fixed inC-major, then kH, kW order, so results
// are identical at any thread count.
FeatureMap conv2d_forward(const FeatureMap& input, const Kernel& kernel,
                          std::span<const float> bias,
                          const Conv2dGeometry& geom);

// Exact vector-Jacobian products of conv2d_forward. Kernel/bias gradients
// are exercised by tests only; encoder weights are never updated.
ConvGrads conv2d_backward(const FeatureMap& input, const Kernel& kernel,
                          const Conv2dGeometry& geom,
                          const FeatureMap& upstream);

FeatureMap relu_forward(const FeatureMap& x);
// Passes upstream where x > 0; subgradient at exactly 0 is 0.
FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& upstream);

enum class PoolMode { Max, Average };

struct PoolResult {
  FeatureMap output;
  // Max mode: flat input index of the window maximum per output element
  // (first hit in scan order on ties). Empty in average mode.
  std::vector<int32_t> argmax;
};

// 2x2 window, stride 2. Odd spatial dims are replicate-padded on the
// bottom/right edge before pooling; average mode always divides by 4.
PoolResult pool_forward(const FeatureMap& x, PoolMode mode);
FeatureMap pool_backward(const FeatureMap& x, const PoolResult& fwd,
                         PoolMode mode, const FeatureMap& upstream);

// Nearest-neighbor upsampling with src = floor(dst * srcDim / dstDim).
// Shrinking requests are rejected.
FeatureMap upsample_nearest(const FeatureMap& x, int targetH, int targetW);
// Exact adjoint: sums upstream over each source site's replication set.
FeatureMap upsample_backward(const FeatureMap& upstream, int srcH, int srcW);

} // namespace crossgram
