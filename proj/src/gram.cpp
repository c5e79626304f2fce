#include "crossgram/gram.hpp"

#include <algorithm>
#include <set>

#include "crossgram/errors.hpp"

namespace crossgram {

namespace {

constexpr long long kParallelGrain = 1 << 15;

bool worthParallel(long long work) { return work >= kParallelGrain; }

} // namespace

std::string pair_name(const LayerPair& p) {
  return layer_name(p.finer) + "-" + layer_name(p.coarser);
}

GramMatrix gram_within(const FeatureMap& f) {
  const int k = f.channels;
  const int sites = f.sites();
  GramMatrix g(k, k, sites);

  const long long work = static_cast<long long>(k) * k * sites / 2;
#pragma omp parallel for schedule(static) if (worthParallel(work))
  for (int i = 0; i < k; ++i) {
    const float* fi = f.data.data() + static_cast<size_t>(i) * sites;
    for (int j = i; j < k; ++j) {
      const float* fj = f.data.data() + static_cast<size_t>(j) * sites;
      double acc = 0.0;
      for (int p = 0; p < sites; ++p)
        acc += static_cast<double>(fi[p]) * fj[p];
      const float v = static_cast<float>(acc);
      g.at(i, j) = v;
      g.at(j, i) = v;
    }
  }
  return g;
}

GramMatrix gram_cross(const FeatureMap& fl, const FeatureMap& fm) {
  if (fm.height > fl.height || fm.width > fl.width)
    throw ShapeError("gram_cross: coarser map " + fm.shapeString() +
                     " is spatially larger than finer map " +
                     fl.shapeString());
  const FeatureMap up = upsample_nearest(fm, fl.height, fl.width);
  const int kl = fl.channels;
  const int km = fm.channels;
  const int sites = fl.sites();
  GramMatrix g(kl, km, sites);

  const long long work = static_cast<long long>(kl) * km * sites;
#pragma omp parallel for collapse(2) schedule(static) if (worthParallel(work))
  for (int i = 0; i < kl; ++i) {
    for (int j = 0; j < km; ++j) {
      const float* fi = fl.data.data() + static_cast<size_t>(i) * sites;
      const float* fj = up.data.data() + static_cast<size_t>(j) * sites;
      double acc = 0.0;
      for (int p = 0; p < sites; ++p)
        acc += static_cast<double>(fi[p]) * fj[p];
      g.at(i, j) = static_cast<float>(acc);
    }
  }
  return g;
}

std::pair<FeatureMap, FeatureMap> gram_backward(const FeatureMap& fl,
                                                const FeatureMap& fm,
                                                const GramMatrix& upstream) {
  if (upstream.rows != fl.channels || upstream.cols != fm.channels)
    throw ShapeError("gram_backward: upstream " + std::to_string(upstream.rows) +
                     "x" + std::to_string(upstream.cols) +
                     " does not match channel counts " +
                     std::to_string(fl.channels) + "/" +
                     std::to_string(fm.channels));
  const FeatureMap up = upsample_nearest(fm, fl.height, fl.width);
  const int kl = fl.channels;
  const int km = fm.channels;
  const int sites = fl.sites();

  // d/d fl of sum_ij u_ij G_ij: gradFl = u * upsampled(fm).
  FeatureMap gradFl(kl, fl.height, fl.width);
  const long long workL = static_cast<long long>(kl) * km * sites;
#pragma omp parallel for schedule(static) if (worthParallel(workL))
  for (int i = 0; i < kl; ++i) {
    float* out = gradFl.data.data() + static_cast<size_t>(i) * sites;
    for (int p = 0; p < sites; ++p) {
      double acc = 0.0;
      for (int j = 0; j < km; ++j)
        acc += static_cast<double>(upstream.at(i, j)) *
               up.data[static_cast<size_t>(j) * sites + p];
      out[p] = static_cast<float>(acc);
    }
  }

  // d/d (up fm) = u^T * fl, then pull back through the upsample adjoint.
  FeatureMap gradUp(km, fl.height, fl.width);
#pragma omp parallel for schedule(static) if (worthParallel(workL))
  for (int j = 0; j < km; ++j) {
    float* out = gradUp.data.data() + static_cast<size_t>(j) * sites;
    for (int p = 0; p < sites; ++p) {
      double acc = 0.0;
      for (int i = 0; i < kl; ++i)
        acc += static_cast<double>(upstream.at(i, j)) *
               fl.data[static_cast<size_t>(i) * sites + p];
      out[p] = static_cast<float>(acc);
    }
  }
  FeatureMap gradFm = upsample_backward(gradUp, fm.height, fm.width);
  return {std::move(gradFl), std::move(gradFm)};
}

PairStrategy PairStrategy::individual(std::vector<LayerId> layers) {
  return PairStrategy{Kind::Individual, std::move(layers), {}};
}

PairStrategy PairStrategy::pairwiseDescending(std::vector<LayerId> layers) {
  return PairStrategy{Kind::PairwiseDescending, std::move(layers), {}};
}

PairStrategy PairStrategy::allDistinctPairs(std::vector<LayerId> layers) {
  return PairStrategy{Kind::AllDistinctPairs, std::move(layers), {}};
}

PairStrategy PairStrategy::explicitPairList(std::vector<LayerPair> pairs) {
  return PairStrategy{Kind::Explicit, {}, std::move(pairs)};
}

std::vector<LayerId> PairStrategy::defaultStyleLayers() {
  return {LayerId::R11, LayerId::R21, LayerId::R31, LayerId::R41, LayerId::R51};
}

std::vector<LayerPair> PairStrategy::resolve() const {
  std::vector<LayerPair> pairs;
  if (kind == Kind::Explicit) {
    std::set<LayerPair> seen;
    for (const auto& p : explicitPairs) {
      if (layer_depth(p.finer) > layer_depth(p.coarser))
        throw ConfigError("pair " + pair_name(p) +
                          " lists the coarser layer first");
      if (!seen.insert(p).second)
        throw ConfigError("duplicate pair " + pair_name(p));
      pairs.push_back(p);
    }
    return pairs;
  }

  std::vector<LayerId> sorted = layers;
  std::sort(sorted.begin(), sorted.end(),
            [](LayerId a, LayerId b) { return layer_depth(a) < layer_depth(b); });
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.empty())
    throw ConfigError("pair strategy has no layers");

  switch (kind) {
    case Kind::Individual:
      for (LayerId l : sorted) pairs.push_back({l, l});
      break;
    case Kind::PairwiseDescending:
      if (sorted.size() < 2)
        throw ConfigError("pairwise-descending needs at least two layers");
      for (size_t i = 0; i + 1 < sorted.size(); ++i)
        pairs.push_back({sorted[i], sorted[i + 1]});
      break;
    case Kind::AllDistinctPairs:
      if (sorted.size() < 2)
        throw ConfigError("all-distinct-pairs needs at least two layers");
      for (size_t i = 0; i < sorted.size(); ++i)
        for (size_t j = i + 1; j < sorted.size(); ++j)
          pairs.push_back({sorted[i], sorted[j]});
      break;
    case Kind::Explicit:
      break;
  }
  return pairs;
}

long long constraint_count(const PairStrategy& strategy,
                           const std::map<LayerId, int>& channelWidths) {
  long long total = 0;
  for (const auto& p : strategy.resolve()) {
    auto l = channelWidths.find(p.finer);
    auto m = channelWidths.find(p.coarser);
    if (l == channelWidths.end())
      throw ConfigError("no channel width for layer " + layer_name(p.finer));
    if (m == channelWidths.end())
      throw ConfigError("no channel width for layer " + layer_name(p.coarser));
    total += static_cast<long long>(l->second) * m->second;
  }
  return total;
}

} // namespace crossgram
