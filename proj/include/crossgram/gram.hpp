#pragma once

#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "crossgram/encoder.hpp"
#include "crossgram/tensor.hpp"

namespace crossgram {

// An ordered style-layer pair; the finer (earlier, higher-resolution)
// layer always comes first. Within-layer statistics are the degenerate
// self-pair.
struct LayerPair {
  LayerId finer;
  LayerId coarser;

  bool self() const { return finer == coarser; }
  auto operator<=>(const LayerPair&) const = default;
};

std::string pair_name(const LayerPair& p); // "R11-R21"

// Second-moment statistics between two layers' channels, summed over the
// finer layer's spatial sites. rows = K^l, cols = K^m; fineSites carries
// the P^l the loss normalization needs.
struct GramMatrix {
  int rows = 0;
  int cols = 0;
  int fineSites = 0;
  std::optional<LayerPair> source;
  std::vector<float> data;

  GramMatrix() = default;
  GramMatrix(int r, int c, int sites)
      : rows(r), cols(c), fineSites(sites),
        data(static_cast<size_t>(r) * c, 0.0f) {}

  float& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  float at(int i, int j) const {
    return data[static_cast<size_t>(i) * cols + j];
  }
};

// G_ij = sum_p f_ip f_jp. Symmetric positive semidefinite; only the upper
// triangle is computed, the mirror copy is exact.
GramMatrix gram_within(const FeatureMap& f);

// G_ij = sum_p f^l_ip (up f^m)_jp with f_m nearest-neighbor-upsampled to
// f_l's grid. Equals gram_within when both arguments are the same map.
GramMatrix gram_cross(const FeatureMap& fl, const FeatureMap& fm);

// Exact adjoint of gram_cross. For the within-layer case call with
// fl == fm and sum both returned gradients.
std::pair<FeatureMap, FeatureMap> gram_backward(const FeatureMap& fl,
                                                const FeatureMap& fm,
                                                const GramMatrix& upstream);

// How style layers are grouped into controlled pairs.
struct PairStrategy {
  enum class Kind { Individual, PairwiseDescending, AllDistinctPairs, Explicit };

  Kind kind = Kind::PairwiseDescending;
  std::vector<LayerId> layers; // ignored for Explicit
  std::vector<LayerPair> explicitPairs;

  static PairStrategy individual(std::vector<LayerId> layers);
  static PairStrategy pairwiseDescending(std::vector<LayerId> layers);
  static PairStrategy allDistinctPairs(std::vector<LayerId> layers);
  static PairStrategy explicitPairList(std::vector<LayerPair> pairs);

  // Resolved pair list with the finer layer first in each pair; duplicate
  // pairs and wrongly ordered explicit pairs are rejected.
  std::vector<LayerPair> resolve() const;
  static std::vector<LayerId> defaultStyleLayers();
};

// Sum over resolved pairs of K^l * K^m.
long long constraint_count(const PairStrategy& strategy,
                           const std::map<LayerId, int>& channelWidths);

} // namespace crossgram
