#include "crossgram/encoder.hpp"

#include <algorithm>
#include <map>

#include "crossgram/cgwt.hpp"
#include "crossgram/errors.hpp"

namespace crossgram {

namespace {

struct LayerNameEntry {
  LayerId id;
  const char* name;
};

constexpr LayerNameEntry kLayerNames[] = {
    {LayerId::R11, "R11"}, {LayerId::R12, "R12"}, {LayerId::R21, "R21"},
    {LayerId::R22, "R22"}, {LayerId::R31, "R31"}, {LayerId::R32, "R32"},
    {LayerId::R33, "R33"}, {LayerId::R34, "R34"}, {LayerId::R41, "R41"},
    {LayerId::R42, "R42"}, {LayerId::R43, "R43"}, {LayerId::R44, "R44"},
    {LayerId::R51, "R51"}, {LayerId::R52, "R52"}, {LayerId::R53, "R53"},
    {LayerId::R54, "R54"},
};

LayerId tapForBlockConv(int block, int conv) {
  static const std::map<std::pair<int, int>, LayerId> table = [] {
    std::map<std::pair<int, int>, LayerId> t;
    t[{1, 1}] = LayerId::R11; t[{1, 2}] = LayerId::R12;
    t[{2, 1}] = LayerId::R21; t[{2, 2}] = LayerId::R22;
    t[{3, 1}] = LayerId::R31; t[{3, 2}] = LayerId::R32;
    t[{3, 3}] = LayerId::R33; t[{3, 4}] = LayerId::R34;
    t[{4, 1}] = LayerId::R41; t[{4, 2}] = LayerId::R42;
    t[{4, 3}] = LayerId::R43; t[{4, 4}] = LayerId::R44;
    t[{5, 1}] = LayerId::R51; t[{5, 2}] = LayerId::R52;
    t[{5, 3}] = LayerId::R53; t[{5, 4}] = LayerId::R54;
    return t;
  }();
  auto it = table.find({block, conv});
  if (it == table.end())
    throw ConfigError("encoder: no layer id for conv" + std::to_string(block) +
                      "_" + std::to_string(conv));
  return it->second;
}

std::string convWeightName(int block, int conv) {
  return "conv" + std::to_string(block) + "_" + std::to_string(conv);
}

FeatureMap preprocess(const EncoderSpec& spec, const Image& image) {
  FeatureMap f(Image::kChannels, image.height, image.width);
  const int sites = image.height * image.width;
  for (int c = 0; c < Image::kChannels; ++c) {
    const float mean = spec.preprocMean[c];
    const float invStd = 1.0f / spec.preprocStd[c];
    const size_t base = static_cast<size_t>(c) * sites;
    for (int p = 0; p < sites; ++p)
      f.data[base + p] = (image.data[base + p] - mean) * invStd;
  }
  return f;
}

} // namespace

int layer_depth(LayerId id) { return static_cast<int>(id); }

std::string layer_name(LayerId id) {
  return kLayerNames[static_cast<size_t>(id)].name;
}

LayerId parse_layer(const std::string& name) {
  for (const auto& e : kLayerNames)
    if (name == e.name) return e.id;
  throw ConfigError("unknown layer name '" + name + "'");
}

bool EncoderSpec::hasTap(LayerId id) const {
  for (const auto& l : layers)
    if (l.kind == EncoderLayer::Kind::Conv && l.tap == id) return true;
  return false;
}

int EncoderSpec::layerIndexOf(LayerId id) const {
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == EncoderLayer::Kind::Conv && layers[i].tap == id)
      return static_cast<int>(i);
  throw ConfigError("encoder spec has no layer " + layer_name(id));
}

int EncoderSpec::channelsAt(LayerId id) const {
  return layers[layerIndexOf(id)].outChannels;
}

std::map<LayerId, int> EncoderSpec::widthMap() const {
  std::map<LayerId, int> widths;
  for (const auto& l : layers)
    if (l.kind == EncoderLayer::Kind::Conv) widths[l.tap] = l.outChannels;
  return widths;
}

int EncoderSpec::poolCount() const {
  int n = 0;
  for (const auto& l : layers)
    if (l.kind == EncoderLayer::Kind::Pool) ++n;
  return n;
}

EncoderSpec EncoderSpec::vgg(const std::array<int, 5>& widths,
                             const std::array<int, 5>& convsPerBlock,
                             PoolMode mode, std::array<float, 3> mean,
                             std::array<float, 3> std) {
  EncoderSpec spec;
  spec.poolMode = mode;
  spec.preprocMean = mean;
  spec.preprocStd = std;
  int inC = Image::kChannels;
  for (int block = 1; block <= 5; ++block) {
    const int outC = widths[block - 1];
    for (int conv = 1; conv <= convsPerBlock[block - 1]; ++conv) {
      EncoderLayer l;
      l.kind = EncoderLayer::Kind::Conv;
      l.tap = tapForBlockConv(block, conv);
      l.weightName = convWeightName(block, conv);
      l.inChannels = inC;
      l.outChannels = outC;
      l.kernelSize = 3;
      l.padding = 1;
      l.applyRelu = true;
      spec.layers.push_back(std::move(l));
      inC = outC;
    }
    if (block < 5) {
      EncoderLayer p;
      p.kind = EncoderLayer::Kind::Pool;
      spec.layers.push_back(std::move(p));
    }
  }
  return spec;
}

EncoderSpec EncoderSpec::ortho1x1(const std::array<int, 5>& widths,
                                  std::array<float, 3> mean,
                                  std::array<float, 3> std) {
  EncoderSpec spec;
  spec.preprocMean = mean;
  spec.preprocStd = std;
  int inC = Image::kChannels;
  for (int block = 1; block <= 5; ++block) {
    EncoderLayer l;
    l.kind = EncoderLayer::Kind::Conv;
    l.tap = tapForBlockConv(block, 1);
    l.weightName = convWeightName(block, 1);
    l.inChannels = inC;
    l.outChannels = widths[block - 1];
    l.kernelSize = 1;
    l.padding = 0;
    l.applyRelu = false;
    spec.layers.push_back(std::move(l));
    inC = widths[block - 1];
  }
  return spec;
}

const FeatureMap& ActivationTrace::at(LayerId id) const {
  auto it = tapStage.find(id);
  if (it == tapStage.end())
    throw ConfigError("activation trace has no tap " + layer_name(id));
  return stageOutputs[it->second];
}

void load_weights(const std::string& path, EncoderSpec& spec) {
  auto tensors = cgwt::read_file(path);
  std::map<std::string, cgwt::NamedTensor*> byName;
  for (auto& t : tensors) byName[t.name] = &t;

  size_t consumed = 0;
  auto take = [&](const std::string& name) -> cgwt::NamedTensor& {
    auto it = byName.find(name);
    if (it == byName.end())
      throw IoError("CGWT: " + path + " is missing tensor " + name);
    ++consumed;
    return *it->second;
  };

  for (auto& layer : spec.layers) {
    if (layer.kind != EncoderLayer::Kind::Conv) continue;
    auto& w = take(layer.weightName + ".weight");
    const std::vector<uint32_t> want = {
        static_cast<uint32_t>(layer.outChannels),
        static_cast<uint32_t>(layer.inChannels),
        static_cast<uint32_t>(layer.kernelSize),
        static_cast<uint32_t>(layer.kernelSize)};
    if (w.dims != want)
      throw IoError("CGWT: tensor " + w.name + " has wrong shape (expected " +
                    std::to_string(layer.outChannels) + "x" +
                    std::to_string(layer.inChannels) + "x" +
                    std::to_string(layer.kernelSize) + "x" +
                    std::to_string(layer.kernelSize) + ")");
    layer.weight = Kernel(layer.outChannels, layer.inChannels,
                          layer.kernelSize, layer.kernelSize);
    layer.weight.data = w.data;

    auto& b = take(layer.weightName + ".bias");
    if (b.dims != std::vector<uint32_t>{static_cast<uint32_t>(layer.outChannels)})
      throw IoError("CGWT: tensor " + b.name + " has wrong shape (expected " +
                    std::to_string(layer.outChannels) + ")");
    layer.bias = b.data;
  }

  auto& mean = take("preproc.mean");
  auto& stdv = take("preproc.std");
  if (mean.data.size() != 3 || stdv.data.size() != 3)
    throw IoError("CGWT: preproc.mean/std must hold 3 values each in " + path);
  std::copy_n(mean.data.begin(), 3, spec.preprocMean.begin());
  std::copy_n(stdv.data.begin(), 3, spec.preprocStd.begin());

  if (consumed != tensors.size()) {
    for (const auto& t : tensors) {
      bool expected = t.name == "preproc.mean" || t.name == "preproc.std";
      for (const auto& layer : spec.layers)
        if (layer.kind == EncoderLayer::Kind::Conv &&
            (t.name == layer.weightName + ".weight" ||
             t.name == layer.weightName + ".bias"))
          expected = true;
      if (!expected)
        throw IoError("CGWT: " + path + " carries unexpected tensor " + t.name);
    }
  }
  spec.weightsBound = true;
}

void save_weights(const std::string& path, const EncoderSpec& spec) {
  std::vector<cgwt::NamedTensor> tensors;
  for (const auto& layer : spec.layers) {
    if (layer.kind != EncoderLayer::Kind::Conv) continue;
    cgwt::NamedTensor w;
    w.name = layer.weightName + ".weight";
    w.dims = {static_cast<uint32_t>(layer.outChannels),
              static_cast<uint32_t>(layer.inChannels),
              static_cast<uint32_t>(layer.kernelSize),
              static_cast<uint32_t>(layer.kernelSize)};
    w.data = layer.weight.data;
    tensors.push_back(std::move(w));

    cgwt::NamedTensor b;
    b.name = layer.weightName + ".bias";
    b.dims = {static_cast<uint32_t>(layer.outChannels)};
    b.data = layer.bias;
    tensors.push_back(std::move(b));
  }
  cgwt::NamedTensor mean, stdv;
  mean.name = "preproc.mean";
  mean.dims = {3};
  mean.data.assign(spec.preprocMean.begin(), spec.preprocMean.end());
  stdv.name = "preproc.std";
  stdv.dims = {3};
  stdv.data.assign(spec.preprocStd.begin(), spec.preprocStd.end());
  tensors.push_back(std::move(mean));
  tensors.push_back(std::move(stdv));
  cgwt::write_file(path, tensors);
}

ActivationTrace forward(const EncoderSpec& spec, const Image& image,
                        const std::set<LayerId>& taps) {
  for (LayerId t : taps)
    if (!spec.hasTap(t))
      throw ConfigError("encoder spec has no tap " + layer_name(t));
  if (!spec.weightsBound)
    throw ConfigError("encoder weights are not bound; load_weights first");

  ActivationTrace trace;
  trace.input = image;
  trace.preprocessed = preprocess(spec, image);
  trace.stageOutputs.reserve(spec.layers.size());
  trace.poolArgmax.resize(spec.layers.size());

  const FeatureMap* cur = &trace.preprocessed;
  for (size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    if (layer.kind == EncoderLayer::Kind::Conv) {
      FeatureMap out = conv2d_forward(*cur, layer.weight, layer.bias,
                                      Conv2dGeometry::same(layer.padding));
      if (layer.applyRelu) out = relu_forward(out);
      trace.stageOutputs.push_back(std::move(out));
      if (taps.count(layer.tap))
        trace.tapStage[layer.tap] = static_cast<int>(i);
    } else {
      PoolResult pr = pool_forward(*cur, spec.poolMode);
      trace.poolArgmax[i] = std::move(pr.argmax);
      trace.stageOutputs.push_back(std::move(pr.output));
    }
    cur = &trace.stageOutputs.back();
  }
  return trace;
}

Image backward_to_image(const EncoderSpec& spec, const ActivationTrace& trace,
                        const std::map<LayerId, FeatureMap>& cotangents) {
  std::map<int, const FeatureMap*> byStage;
  for (const auto& [id, cot] : cotangents) {
    auto it = trace.tapStage.find(id);
    if (it == trace.tapStage.end())
      throw ConfigError("backward_to_image: cotangent for untapped layer " +
                        layer_name(id));
    if (!cot.sameShape(trace.stageOutputs[it->second]))
      throw ShapeError("backward_to_image: cotangent for " + layer_name(id) +
                       " has shape " + cot.shapeString() + ", activation is " +
                       trace.stageOutputs[it->second].shapeString());
    byStage[it->second] = &cot;
  }
  Image grad(trace.input.height, trace.input.width);
  if (byStage.empty()) return grad;

  const int deepest = byStage.rbegin()->first;
  FeatureMap g(trace.stageOutputs[deepest].channels,
               trace.stageOutputs[deepest].height,
               trace.stageOutputs[deepest].width);

  for (int i = deepest; i >= 0; --i) {
    const auto& layer = spec.layers[i];
    if (auto it = byStage.find(i); it != byStage.end()) {
      for (size_t k = 0; k < g.data.size(); ++k)
        g.data[k] += it->second->data[k];
    }
    const FeatureMap& stageIn = (i == 0) ? trace.preprocessed
                                         : trace.stageOutputs[i - 1];
    if (layer.kind == EncoderLayer::Kind::Conv) {
      if (layer.applyRelu) {
        // Post-ReLU output > 0 exactly where the pre-activation was > 0.
        g = relu_backward(trace.stageOutputs[i], g);
      }
      ConvGrads cg = conv2d_backward(stageIn, layer.weight,
                                     Conv2dGeometry::same(layer.padding), g);
      g = std::move(cg.input);
    } else {
      PoolResult pr;
      pr.output = trace.stageOutputs[i]; // shape carrier for the check
      pr.argmax = trace.poolArgmax[i];
      g = pool_backward(stageIn, pr, spec.poolMode, g);
    }
  }

  // Undo the preprocessing affine map: d/dpixel of (pixel - mean)/std.
  for (int c = 0; c < Image::kChannels; ++c) {
    const float invStd = 1.0f / spec.preprocStd[c];
    const size_t base = static_cast<size_t>(c) * grad.height * grad.width;
    for (int p = 0; p < grad.height * grad.width; ++p)
      grad.data[base + p] = g.data[base + p] * invStd;
  }
  return grad;
}

std::vector<std::pair<int, int>> stage_dims(const EncoderSpec& spec, int height,
                                            int width) {
  std::vector<std::pair<int, int>> dims;
  int h = height, w = width;
  for (const auto& layer : spec.layers) {
    if (layer.kind == EncoderLayer::Kind::Conv) {
      h = h + 2 * layer.padding - layer.kernelSize + 1;
      w = w + 2 * layer.padding - layer.kernelSize + 1;
    } else {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
    }
    dims.emplace_back(h, w);
  }
  return dims;
}

} // namespace crossgram
