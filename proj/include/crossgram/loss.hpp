#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crossgram/encoder.hpp"
#include "crossgram/gram.hpp"

namespace crossgram {

enum class CombineMode { Additive, Multiplicative };

// Full description of the objective: which layers are controlled, how
// pairs are formed, how style and content are balanced.
struct LossConfig {
  LayerId contentLayer = LayerId::R42;
  PairStrategy styleStrategy =
      PairStrategy::pairwiseDescending(PairStrategy::defaultStyleLayers());
  std::map<LayerPair, double> pairWeights; // absent pair -> weight 1
  std::optional<double> alpha;             // additive mode with content only
  CombineMode combine = CombineMode::Multiplicative;
  bool includeContent = true;

  double weightOf(const LayerPair& p) const;
  // Rejects nonpositive weights/alpha and a missing alpha in additive
  // mode with content enabled.
  void validate() const;
};

// Precomputed gram targets of the style image, in resolved pair order.
struct StyleTargets {
  std::vector<std::pair<LayerPair, GramMatrix>> targets;

  const GramMatrix& at(const LayerPair& p) const;
};

StyleTargets build_style_targets(const EncoderSpec& spec, const Image& style,
                                 const LossConfig& config);

// One evaluation's scalar terms. Serializes to the line-oriented log
// format: iter=<n> total=<v> content=<v> style=<v> pair:<l>-<m>=<v> ...
// with fixed field order and 9 significant digits.
struct LossReport {
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;
  std::vector<std::pair<LayerPair, double>> pairTerms;

  std::string logLine(int iter) const;
};

// value = 1/2 sum (f_n - f_c)^2 at the layer; cotangent = (f_n - f_c).
std::pair<double, FeatureMap> content_loss(const ActivationTrace& traceN,
                                           const ActivationTrace& traceC,
                                           LayerId layer);

struct StyleLossResult {
  double value = 0.0;
  std::vector<std::pair<LayerPair, double>> pairTerms;
  std::map<LayerId, FeatureMap> cotangents; // per style layer, summed over pairs
};

// value = sum over pairs of w * (G(I_n) - G(I_s))^2 / (4 P_l^2 K_l K_m);
// cotangents are assembled through gram_backward and summed per layer.
StyleLossResult style_loss(const ActivationTrace& traceN,
                           const StyleTargets& targets,
                           const LossConfig& config);

struct CombineResult {
  double total = 0.0;
  Image gradient;
};

// Additive: total = c + alpha*s. Multiplicative: total = c*s with the
// exact product rule s*grad(c) + c*grad(s), including at zero.
CombineResult combine(double contentValue, double styleValue,
                      const Image& contentGrad, const Image& styleGrad,
                      const LossConfig& config);

struct EvalResult {
  LossReport report;
  Image gradient;
};

// One encoder forward with every needed tap, loss terms, and a single
// backward pass with all (combine-scaled) cotangents summed.
EvalResult evaluate(const Image& image, const StyleTargets& styleTargets,
                    const ActivationTrace* contentTrace,
                    const LossConfig& config, const EncoderSpec& spec);

} // namespace crossgram
