#include "crossgram/loss.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "crossgram/errors.hpp"

namespace crossgram {

double LossConfig::weightOf(const LayerPair& p) const {
  auto it = pairWeights.find(p);
  return it == pairWeights.end() ? 1.0 : it->second;
}

void LossConfig::validate() const {
  for (const auto& [pair, w] : pairWeights)
    if (w <= 0.0)
      throw ConfigError("weight for pair " + pair_name(pair) +
                        " must be positive");
  if (combine == CombineMode::Additive && includeContent) {
    if (!alpha)
      throw ConfigError("additive mode requires alpha");
    if (*alpha <= 0.0)
      throw ConfigError("alpha must be positive");
  }
  styleStrategy.resolve(); // surfaces malformed strategies early
}

const GramMatrix& StyleTargets::at(const LayerPair& p) const {
  for (const auto& [pair, gram] : targets)
    if (pair == p) return gram;
  throw ConfigError("no style target for pair " + pair_name(p));
}

StyleTargets build_style_targets(const EncoderSpec& spec, const Image& style,
                                 const LossConfig& config) {
  const auto pairs = config.styleStrategy.resolve();
  std::set<LayerId> taps;
  for (const auto& p : pairs) {
    taps.insert(p.finer);
    taps.insert(p.coarser);
  }
  const ActivationTrace trace = forward(spec, style, taps);
  StyleTargets out;
  for (const auto& p : pairs) {
    GramMatrix g = p.self() ? gram_within(trace.at(p.finer))
                            : gram_cross(trace.at(p.finer), trace.at(p.coarser));
    g.source = p;
    out.targets.emplace_back(p, std::move(g));
  }
  return out;
}

std::string LossReport::logLine(int iter) const {
  char buf[64];
  std::string line = "iter=" + std::to_string(iter);
  auto app = [&](const std::string& key, double v) {
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    line += " " + key + "=" + buf;
  };
  app("total", total);
  app("content", content);
  app("style", style);
  for (const auto& [pair, v] : pairTerms)
    app("pair:" + pair_name(pair), v);
  return line;
}

std::pair<double, FeatureMap> content_loss(const ActivationTrace& traceN,
                                           const ActivationTrace& traceC,
                                           LayerId layer) {
  const FeatureMap& fn = traceN.at(layer);
  const FeatureMap& fc = traceC.at(layer);
  if (!fn.sameShape(fc))
    throw ShapeError("content_loss: traces disagree at " + layer_name(layer) +
                     ": " + fn.shapeString() + " vs " + fc.shapeString());
  FeatureMap cot(fn.channels, fn.height, fn.width);
  double acc = 0.0;
  for (size_t i = 0; i < fn.data.size(); ++i) {
    const float d = fn.data[i] - fc.data[i];
    cot.data[i] = d;
    acc += 0.5 * static_cast<double>(d) * d;
  }
  return {acc, std::move(cot)};
}

StyleLossResult style_loss(const ActivationTrace& traceN,
                           const StyleTargets& targets,
                           const LossConfig& config) {
  StyleLossResult res;
  for (const auto& p : config.styleStrategy.resolve()) {
    const FeatureMap& fl = traceN.at(p.finer);
    const FeatureMap& fm = traceN.at(p.coarser);
    const GramMatrix gn =
        p.self() ? gram_within(fl) : gram_cross(fl, fm);
    const GramMatrix& gs = targets.at(p);
    if (gn.rows != gs.rows || gn.cols != gs.cols)
      throw ShapeError("style_loss: gram for " + pair_name(p) + " is " +
                       std::to_string(gn.rows) + "x" + std::to_string(gn.cols) +
                       " but target is " + std::to_string(gs.rows) + "x" +
                       std::to_string(gs.cols));

    const double w = config.weightOf(p);
    const double sitesL = static_cast<double>(gn.fineSites);
    const double norm =
        1.0 / (4.0 * sitesL * sitesL * gn.rows * gn.cols);

    double sq = 0.0;
    GramMatrix upstream(gn.rows, gn.cols, gn.fineSites);
    for (size_t i = 0; i < gn.data.size(); ++i) {
      const double d = static_cast<double>(gn.data[i]) - gs.data[i];
      sq += d * d;
      upstream.data[i] = static_cast<float>(2.0 * w * norm * d);
    }
    const double term = w * norm * sq;
    res.value += term;
    res.pairTerms.emplace_back(p, term);

    auto [gradL, gradM] = gram_backward(fl, fm, upstream);
    auto addInto = [&](LayerId id, const FeatureMap& g) {
      auto [it, fresh] = res.cotangents.try_emplace(
          id, FeatureMap(g.channels, g.height, g.width));
      for (size_t i = 0; i < g.data.size(); ++i)
        it->second.data[i] += g.data[i];
      (void)fresh;
    };
    addInto(p.finer, gradL);
    addInto(p.coarser, gradM);
  }
  return res;
}

CombineResult combine(double contentValue, double styleValue,
                      const Image& contentGrad, const Image& styleGrad,
                      const LossConfig& config) {
  if (contentGrad.height != styleGrad.height ||
      contentGrad.width != styleGrad.width)
    throw ShapeError("combine: gradient shapes differ");
  CombineResult out;
  out.gradient = Image(contentGrad.height, contentGrad.width);
  if (config.combine == CombineMode::Additive) {
    if (!config.alpha)
      throw ConfigError("additive mode requires alpha");
    const double a = *config.alpha;
    out.total = contentValue + a * styleValue;
    for (size_t i = 0; i < out.gradient.data.size(); ++i)
      out.gradient.data[i] = static_cast<float>(
          contentGrad.data[i] + a * static_cast<double>(styleGrad.data[i]));
  } else {
    out.total = contentValue * styleValue;
    for (size_t i = 0; i < out.gradient.data.size(); ++i)
      out.gradient.data[i] = static_cast<float>(
          styleValue * static_cast<double>(contentGrad.data[i]) +
          contentValue * static_cast<double>(styleGrad.data[i]));
  }
  return out;
}

EvalResult evaluate(const Image& image, const StyleTargets& styleTargets,
                    const ActivationTrace* contentTrace,
                    const LossConfig& config, const EncoderSpec& spec) {
  config.validate();
  if (config.includeContent && contentTrace == nullptr)
    throw ConfigError("evaluate: content enabled but no content trace given");

  const auto pairs = config.styleStrategy.resolve();
  std::set<LayerId> taps;
  for (const auto& p : pairs) {
    taps.insert(p.finer);
    taps.insert(p.coarser);
  }
  if (config.includeContent) taps.insert(config.contentLayer);

  const ActivationTrace traceN = forward(spec, image, taps);

  StyleLossResult style = style_loss(traceN, styleTargets, config);

  EvalResult out;
  out.report.style = style.value;
  out.report.pairTerms = std::move(style.pairTerms);

  double contentScale = 0.0; // factor applied to the content cotangent
  double styleScale = 1.0;   // factor applied to every style cotangent
  FeatureMap contentCot;
  if (config.includeContent) {
    auto [cv, cot] = content_loss(traceN, *contentTrace, config.contentLayer);
    out.report.content = cv;
    contentCot = std::move(cot);
    if (config.combine == CombineMode::Additive) {
      out.report.total = cv + *config.alpha * style.value;
      contentScale = 1.0;
      styleScale = *config.alpha;
    } else {
      out.report.total = cv * style.value;
      contentScale = style.value;
      styleScale = cv;
    }
  } else {
    out.report.total = style.value;
  }

  // One backward pass: the combine rule is linear in the cotangents, so
  // scaling them up front is exact.
  std::map<LayerId, FeatureMap> cots;
  for (auto& [id, g] : style.cotangents) {
    FeatureMap scaled(g.channels, g.height, g.width);
    for (size_t i = 0; i < g.data.size(); ++i)
      scaled.data[i] = static_cast<float>(styleScale * g.data[i]);
    cots.emplace(id, std::move(scaled));
  }
  if (config.includeContent) {
    auto [it, fresh] = cots.try_emplace(
        config.contentLayer,
        FeatureMap(contentCot.channels, contentCot.height, contentCot.width));
    for (size_t i = 0; i < contentCot.data.size(); ++i)
      it->second.data[i] += static_cast<float>(contentScale * contentCot.data[i]);
    (void)fresh;
  }
  out.gradient = backward_to_image(spec, traceN, cots);
  return out;
}

} // namespace crossgram
