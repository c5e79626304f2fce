#include "crossgram/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "crossgram/errors.hpp"

namespace crossgram {

namespace {

// Work sizes below this are not worth a thread team.
constexpr long long kParallelGrain = 1 << 15;

bool worthParallel(long long work) { return work >= kParallelGrain; }

} // namespace

std::string FeatureMap::shapeString() const {
  std::ostringstream os;
  os << channels << "x" << height << "x" << width;
  return os.str();
}

std::string Kernel::shapeString() const {
  std::ostringstream os;
  os << outChannels << "x" << inChannels << "x" << kh << "x" << kw;
  return os.str();
}

FeatureMap Image::toFeatureMap() const {
  FeatureMap f(kChannels, height, width);
  f.data = data;
  return f;
}

Image Image::fromFeatureMap(const FeatureMap& f) {
  if (f.channels != kChannels)
    throw ShapeError("Image::fromFeatureMap: expected 3 channels, got " +
                     f.shapeString());
  Image img(f.height, f.width);
  img.data = f.data;
  return img;
}

FeatureMap conv2d_forward(const FeatureMap& input, const Kernel& kernel,
                          std::span<const float> bias,
                          const Conv2dGeometry& geom) {
  if (kernel.inChannels != input.channels)
    throw ShapeError("conv2d_forward: kernel expects " +
                     std::to_string(kernel.inChannels) +
                     " input channels but feature map has " +
                     std::to_string(input.channels) + " (kernel " +
                     kernel.shapeString() + ", input " + input.shapeString() +
                     ")");
  if (static_cast<int>(bias.size()) != kernel.outChannels)
    throw ShapeError("conv2d_forward: bias length " +
                     std::to_string(bias.size()) + " != output channels " +
                     std::to_string(kernel.outChannels));
  if (geom.stride < 1)
    throw ShapeError("conv2d_forward: stride must be positive");
  const int padH = input.height + geom.padTop + geom.padBottom;
  const int padW = input.width + geom.padLeft + geom.padRight;
  if (padH < kernel.kh || padW < kernel.kw)
    throw ShapeError("conv2d_forward: padded extent " + std::to_string(padH) +
                     "x" + std::to_string(padW) + " smaller than kernel " +
                     kernel.shapeString());

  const int outH = (padH - kernel.kh) / geom.stride + 1;
  const int outW = (padW - kernel.kw) / geom.stride + 1;
  FeatureMap out(kernel.outChannels, outH, outW);

  const long long work = static_cast<long long>(out.size()) *
                         kernel.inChannels * kernel.kh * kernel.kw;
#pragma omp parallel for collapse(2) schedule(static) if (worthParallel(work))
  for (int oc = 0; oc < kernel.outChannels; ++oc) {
    for (int oy = 0; oy < outH; ++oy) {
      for (int ox = 0; ox < outW; ++ox) {
        double acc = bias[oc];
        for (int ic = 0; ic < kernel.inChannels; ++ic) {
          for (int ky = 0; ky < kernel.kh; ++ky) {
            const int iy = oy * geom.stride - geom.padTop + ky;
            if (iy < 0 || iy >= input.height) continue;
            for (int kx = 0; kx < kernel.kw; ++kx) {
              const int ix = ox * geom.stride - geom.padLeft + kx;
              if (ix < 0 || ix >= input.width) continue;
              acc += static_cast<double>(input.at(ic, iy, ix)) *
                     kernel.at(oc, ic, ky, kx);
            }
          }
        }
        out.at(oc, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

ConvGrads conv2d_backward(const FeatureMap& input, const Kernel& kernel,
                          const Conv2dGeometry& geom,
                          const FeatureMap& upstream) {
  if (kernel.inChannels != input.channels)
    throw ShapeError("conv2d_backward: kernel " + kernel.shapeString() +
                     " does not accept input " + input.shapeString());
  const int padH = input.height + geom.padTop + geom.padBottom;
  const int padW = input.width + geom.padLeft + geom.padRight;
  const int outH = (padH - kernel.kh) / geom.stride + 1;
  const int outW = (padW - kernel.kw) / geom.stride + 1;
  if (upstream.channels != kernel.outChannels || upstream.height != outH ||
      upstream.width != outW)
    throw ShapeError("conv2d_backward: upstream " + upstream.shapeString() +
                     " does not match forward output " +
                     std::to_string(kernel.outChannels) + "x" +
                     std::to_string(outH) + "x" + std::to_string(outW));

  ConvGrads g;
  g.input = FeatureMap(input.channels, input.height, input.width);
  g.kernel = Kernel(kernel.outChannels, kernel.inChannels, kernel.kh, kernel.kw);
  g.bias.assign(kernel.outChannels, 0.0f);

  // Gather form throughout: every gradient element is an independent
  // fixed-order reduction, never a scatter.
  const long long workIn = static_cast<long long>(g.input.size()) *
                           kernel.outChannels * kernel.kh * kernel.kw;
#pragma omp parallel for collapse(2) schedule(static) if (worthParallel(workIn))
  for (int ic = 0; ic < input.channels; ++ic) {
    for (int iy = 0; iy < input.height; ++iy) {
      for (int ix = 0; ix < input.width; ++ix) {
        double acc = 0.0;
        for (int oc = 0; oc < kernel.outChannels; ++oc) {
          for (int ky = 0; ky < kernel.kh; ++ky) {
            const int oyNum = iy + geom.padTop - ky;
            if (oyNum < 0 || oyNum % geom.stride != 0) continue;
            const int oy = oyNum / geom.stride;
            if (oy >= outH) continue;
            for (int kx = 0; kx < kernel.kw; ++kx) {
              const int oxNum = ix + geom.padLeft - kx;
              if (oxNum < 0 || oxNum % geom.stride != 0) continue;
              const int ox = oxNum / geom.stride;
              if (ox >= outW) continue;
              acc += static_cast<double>(upstream.at(oc, oy, ox)) *
                     kernel.at(oc, ic, ky, kx);
            }
          }
        }
        g.input.at(ic, iy, ix) = static_cast<float>(acc);
      }
    }
  }

  const long long workK =
      static_cast<long long>(g.kernel.size()) * outH * outW;
#pragma omp parallel for collapse(2) schedule(static) if (worthParallel(workK))
  for (int oc = 0; oc < kernel.outChannels; ++oc) {
    for (int ic = 0; ic < kernel.inChannels; ++ic) {
      for (int ky = 0; ky < kernel.kh; ++ky) {
        for (int kx = 0; kx < kernel.kw; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < outH; ++oy) {
            const int iy = oy * geom.stride - geom.padTop + ky;
            if (iy < 0 || iy >= input.height) continue;
            for (int ox = 0; ox < outW; ++ox) {
              const int ix = ox * geom.stride - geom.padLeft + kx;
              if (ix < 0 || ix >= input.width) continue;
              acc += static_cast<double>(upstream.at(oc, oy, ox)) *
                     input.at(ic, iy, ix);
            }
          }
          g.kernel.at(oc, ic, ky, kx) = static_cast<float>(acc);
        }
      }
    }
  }

  for (int oc = 0; oc < kernel.outChannels; ++oc) {
    double acc = 0.0;
    for (int oy = 0; oy < outH; ++oy)
      for (int ox = 0; ox < outW; ++ox)
        acc += upstream.at(oc, oy, ox);
    g.bias[oc] = static_cast<float>(acc);
  }
  return g;
}

FeatureMap relu_forward(const FeatureMap& x) {
  FeatureMap out(x.channels, x.height, x.width);
  const long long n = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static) if (worthParallel(n))
  for (long long i = 0; i < n; ++i)
    out.data[i] = x.data[i] > 0.0f ? x.data[i] : 0.0f;
  return out;
}

FeatureMap relu_backward(const FeatureMap& x, const FeatureMap& upstream) {
  if (!x.sameShape(upstream))
    throw ShapeError("relu_backward: input " + x.shapeString() +
                     " vs upstream " + upstream.shapeString());
  FeatureMap out(x.channels, x.height, x.width);
  const long long n = static_cast<long long>(x.size());
#pragma omp parallel for schedule(static) if (worthParallel(n))
  for (long long i = 0; i < n; ++i)
    out.data[i] = x.data[i] > 0.0f ? upstream.data[i] : 0.0f;
  return out;
}

PoolResult pool_forward(const FeatureMap& x, PoolMode mode) {
  const int outH = (x.height + 1) / 2;
  const int outW = (x.width + 1) / 2;
  PoolResult res;
  res.output = FeatureMap(x.channels, outH, outW);
  if (mode == PoolMode::Max)
    res.argmax.assign(res.output.size(), 0);

  const long long work = static_cast<long long>(res.output.size()) * 4;
#pragma omp parallel for schedule(static) if (worthParallel(work))
  for (int c = 0; c < x.channels; ++c) {
    for (int oy = 0; oy < outH; ++oy) {
      for (int ox = 0; ox < outW; ++ox) {
        if (mode == PoolMode::Max) {
          float best = 0.0f;
          int32_t bestIdx = -1;
          for (int ky = 0; ky < 2; ++ky) {
            const int iy = std::min(2 * oy + ky, x.height - 1);
            for (int kx = 0; kx < 2; ++kx) {
              const int ix = std::min(2 * ox + kx, x.width - 1);
              const float v = x.at(c, iy, ix);
              if (bestIdx < 0 || v > best) {
                best = v;
                bestIdx = static_cast<int32_t>(
                    (static_cast<size_t>(c) * x.height + iy) * x.width + ix);
              }
            }
          }
          res.output.at(c, oy, ox) = best;
          res.argmax[(static_cast<size_t>(c) * outH + oy) * outW + ox] =
              bestIdx;
        } else {
          double acc = 0.0;
          for (int ky = 0; ky < 2; ++ky) {
            const int iy = std::min(2 * oy + ky, x.height - 1);
            for (int kx = 0; kx < 2; ++kx) {
              const int ix = std::min(2 * ox + kx, x.width - 1);
              acc += x.at(c, iy, ix);
            }
          }
          res.output.at(c, oy, ox) = static_cast<float>(acc / 4.0);
        }
      }
    }
  }
  return res;
}

FeatureMap pool_backward(const FeatureMap& x, const PoolResult& fwd,
                         PoolMode mode, const FeatureMap& upstream) {
  if (!fwd.output.sameShape(upstream))
    throw ShapeError("pool_backward: upstream " + upstream.shapeString() +
                     " vs pooled output " + fwd.output.shapeString());
  FeatureMap grad(x.channels, x.height, x.width);
  const int outH = fwd.output.height;
  const int outW = fwd.output.width;
  const bool oddH = (x.height % 2) != 0;
  const bool oddW = (x.width % 2) != 0;

  const long long n = static_cast<long long>(grad.size());
  if (mode == PoolMode::Max) {
    // Windows own disjoint input spans (clamped replicas stay inside their
    // own window), so this scatter is race-free.
#pragma omp parallel for schedule(static) if (worthParallel(n))
    for (int c = 0; c < x.channels; ++c) {
      for (int oy = 0; oy < outH; ++oy) {
        for (int ox = 0; ox < outW; ++ox) {
          const size_t oIdx = (static_cast<size_t>(c) * outH + oy) * outW + ox;
          grad.data[fwd.argmax[oIdx]] += upstream.data[oIdx];
        }
      }
    }
  } else {
#pragma omp parallel for schedule(static) if (worthParallel(n))
    for (int c = 0; c < x.channels; ++c) {
      for (int iy = 0; iy < x.height; ++iy) {
        // Replicated edge cells absorb their padded copies' share.
        const int multY = (oddH && iy == x.height - 1) ? 2 : 1;
        for (int ix = 0; ix < x.width; ++ix) {
          const int multX = (oddW && ix == x.width - 1) ? 2 : 1;
          grad.at(c, iy, ix) = upstream.at(c, iy / 2, ix / 2) *
                               static_cast<float>(multY * multX) / 4.0f;
        }
      }
    }
  }
  return grad;
}

FeatureMap upsample_nearest(const FeatureMap& x, int targetH, int targetW) {
  if (targetH < x.height || targetW < x.width)
    throw ShapeError("upsample_nearest: target " + std::to_string(targetH) +
                     "x" + std::to_string(targetW) +
                     " would shrink source " + x.shapeString());
  FeatureMap out(x.channels, targetH, targetW);
  std::vector<int> srcY(targetH), srcX(targetW);
  for (int dy = 0; dy < targetH; ++dy)
    srcY[dy] = static_cast<int>(static_cast<long long>(dy) * x.height / targetH);
  for (int dx = 0; dx < targetW; ++dx)
    srcX[dx] = static_cast<int>(static_cast<long long>(dx) * x.width / targetW);

  const long long n = static_cast<long long>(out.size());
#pragma omp parallel for schedule(static) if (worthParallel(n))
  for (int c = 0; c < x.channels; ++c)
    for (int dy = 0; dy < targetH; ++dy)
      for (int dx = 0; dx < targetW; ++dx)
        out.at(c, dy, dx) = x.at(c, srcY[dy], srcX[dx]);
  return out;
}

FeatureMap upsample_backward(const FeatureMap& upstream, int srcH, int srcW) {
  if (upstream.height < srcH || upstream.width < srcW)
    throw ShapeError("upsample_backward: upstream " + upstream.shapeString() +
                     " smaller than source " + std::to_string(srcH) + "x" +
                     std::to_string(srcW));
  // floor(dst*src/dstDim) is nondecreasing, so each source index owns a
  // contiguous destination range.
  std::vector<int> yStart(srcH + 1, upstream.height), xStart(srcW + 1,
                                                             upstream.width);
  for (int dy = upstream.height - 1; dy >= 0; --dy)
    yStart[static_cast<long long>(dy) * srcH / upstream.height] = dy;
  for (int dx = upstream.width - 1; dx >= 0; --dx)
    xStart[static_cast<long long>(dx) * srcW / upstream.width] = dx;
  yStart[srcH] = upstream.height;
  xStart[srcW] = upstream.width;

  FeatureMap grad(upstream.channels, srcH, srcW);
  const long long n = static_cast<long long>(upstream.size());
#pragma omp parallel for schedule(static) if (worthParallel(n))
  for (int c = 0; c < upstream.channels; ++c) {
    for (int sy = 0; sy < srcH; ++sy) {
      for (int sx = 0; sx < srcW; ++sx) {
        double acc = 0.0;
        for (int dy = yStart[sy]; dy < yStart[sy + 1]; ++dy)
          for (int dx = xStart[sx]; dx < xStart[sx + 1]; ++dx)
            acc += upstream.at(c, dy, dx);
        grad.at(c, sy, sx) = static_cast<float>(acc);
      }
    }
  }
  return grad;
}

} // namespace crossgram
