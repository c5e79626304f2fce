#include "crossgram/lbfgs.hpp"

#include <cmath>
#include <cstdlib>

namespace crossgram {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double infNorm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool allFinite(double f, std::span<const double> g) {
  if (!std::isfinite(f)) return false;
  for (double x : g)
    if (!std::isfinite(x)) return false;
  return true;
}

// Minimizer of the cubic interpolating (a0,f0,d0) and (a1,f1,d1);
// falls back to NaN when the data is degenerate.
double cubicMinimizer(double a0, double f0, double d0, double a1, double f1,
                      double d1) {
  const double h1 = d0 + d1 - 3.0 * (f0 - f1) / (a0 - a1);
  const double disc = h1 * h1 - d0 * d1;
  if (disc < 0.0) return std::nan("");
  const double h2 = std::copysign(std::sqrt(disc), a1 - a0);
  return a1 - (a1 - a0) * (d1 + h2 - h1) / (d1 - d0 + 2.0 * h2);
}

} // namespace

void LbfgsHistory::push(std::vector<double> s, std::vector<double> y) {
  const double sy = dot(s, y);
  const double sn = std::sqrt(dot(s, s));
  const double yn = std::sqrt(dot(y, y));
  if (sy <= 1e-10 * sn * yn) return; // curvature condition violated: skip
  CurvaturePair p;
  p.rho = 1.0 / sy;
  p.s = std::move(s);
  p.y = std::move(y);
  gamma = sy / (yn * yn);
  pairs.push_back(std::move(p));
  while (static_cast<int>(pairs.size()) > memory) pairs.pop_front();
}

std::vector<double> two_loop_direction(const LbfgsHistory& history,
                                       std::span<const double> grad) {
  std::vector<double> q(grad.begin(), grad.end());
  std::vector<double> alpha(history.pairs.size(), 0.0);
  for (size_t k = history.pairs.size(); k-- > 0;) {
    const auto& p = history.pairs[k];
    alpha[k] = p.rho * dot(p.s, q);
    for (size_t i = 0; i < q.size(); ++i) q[i] -= alpha[k] * p.y[i];
  }
  for (double& v : q) v *= history.gamma;
  for (size_t k = 0; k < history.pairs.size(); ++k) {
    const auto& p = history.pairs[k];
    const double beta = p.rho * dot(p.y, q);
    for (size_t i = 0; i < q.size(); ++i) q[i] += (alpha[k] - beta) * p.s[i];
  }
  for (double& v : q) v = -v;
  return q;
}

LbfgsResult minimize(const Objective& objective, std::vector<double> x0,
                     const LbfgsParams& params,
                     const AcceptCallback& onAccept) {
  const size_t n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);

  std::vector<double> g(n, 0.0);
  double f = objective(res.x, g);
  if (!allFinite(f, g)) {
    res.stop = LbfgsStop::NonFiniteAbort;
    res.abortIteration = 0;
    return res;
  }
  res.value = f;
  {
    LbfgsRecord r;
    r.iter = 0;
    r.value = f;
    r.valueBefore = f;
    r.gradInfNorm = infNorm(g);
    res.trace.push_back(r);
  }
  if (onAccept) onAccept(0, res.x, f);
  if (infNorm(g) <= params.gradTolerance) {
    res.stop = LbfgsStop::GradientTolerance;
    return res;
  }

  LbfgsHistory history;
  history.memory = params.memory;

  std::vector<double> xTrial(n), gTrial(n), d;
  for (int iter = 1; iter <= params.maxIterations; ++iter) {
    res.iterations = iter;
    d = two_loop_direction(history, g);
    double dg = dot(d, g);
    if (!(dg < 0.0)) {
      // History is curvature-safe, so this only fires on numerical
      // degeneracy; fall back to steepest descent.
      for (size_t i = 0; i < n; ++i) d[i] = -g[i];
      dg = -dot(g, g);
    }

    const double f0 = f;
    const double dg0 = dg;
    auto phi = [&](double a, double& fOut, double& dgOut) -> bool {
      for (size_t i = 0; i < n; ++i) xTrial[i] = res.x[i] + a * d[i];
      fOut = objective(xTrial, gTrial);
      if (!allFinite(fOut, gTrial)) {
        res.stop = LbfgsStop::NonFiniteAbort;
        res.abortIteration = iter;
        return false;
      }
      dgOut = dot(gTrial, d);
      return true;
    };

    int evalsLeft = params.maxLineSearchSteps;
    bool accepted = false, aborted = false;
    double aAccept = 0.0, fAccept = 0.0, dgAccept = 0.0;

    auto tryAccept = [&](double a, double fa, double dga) {
      aAccept = a;
      fAccept = fa;
      dgAccept = dga;
      accepted = true;
    };

    // Zoom phase: shrink [lo, hi] keeping the strong Wolfe invariants.
    auto zoom = [&](double aLo, double fLo, double dgLo, double aHi,
                    double fHi, double dgHi) {
      while (evalsLeft > 0) {
        double a = cubicMinimizer(aLo, fLo, dgLo, aHi, fHi, dgHi);
        const double lo = std::min(aLo, aHi), hi = std::max(aLo, aHi);
        const double w = hi - lo;
        if (!std::isfinite(a) || a <= lo + 0.1 * w || a >= hi - 0.1 * w)
          a = 0.5 * (lo + hi); // safeguarded bisection
        double fa, dga;
        --evalsLeft;
        if (!phi(a, fa, dga)) {
          aborted = true;
          return;
        }
        if (fa > f0 + params.c1 * a * dg0 || fa >= fLo) {
          aHi = a;
          fHi = fa;
          dgHi = dga;
        } else {
          if (std::abs(dga) <= -params.c2 * dg0) {
            tryAccept(a, fa, dga);
            return;
          }
          if (dga * (aHi - aLo) >= 0.0) {
            aHi = aLo;
            fHi = fLo;
            dgHi = dgLo;
          }
          aLo = a;
          fLo = fa;
          dgLo = dga;
        }
        if (w <= 1e-16 * std::max(1.0, std::abs(aLo))) return;
      }
    };

    // Bracketing phase, initial step 1.
    double aPrev = 0.0, fPrev = f0, dgPrev = dg0;
    double a = 1.0;
    for (int i = 0; evalsLeft > 0 && !accepted && !aborted; ++i) {
      double fa, dga;
      --evalsLeft;
      if (!phi(a, fa, dga)) {
        aborted = true;
        break;
      }
      if (fa > f0 + params.c1 * a * dg0 || (i > 0 && fa >= fPrev)) {
        zoom(aPrev, fPrev, dgPrev, a, fa, dga);
        break;
      }
      if (std::abs(dga) <= -params.c2 * dg0) {
        tryAccept(a, fa, dga);
        break;
      }
      if (dga >= 0.0) {
        zoom(a, fa, dga, aPrev, fPrev, dgPrev);
        break;
      }
      aPrev = a;
      fPrev = fa;
      dgPrev = dga;
      a *= 2.0;
    }

    if (aborted) return res; // res.x is the best accepted point
    if (!accepted) {
      res.stop = LbfgsStop::LineSearchFailed;
      return res;
    }

    // xTrial/gTrial hold the accepted point (the last evaluation).
    std::vector<double> s(n), y(n);
    for (size_t i = 0; i < n; ++i) {
      s[i] = xTrial[i] - res.x[i];
      y[i] = gTrial[i] - g[i];
    }
    history.push(std::move(s), std::move(y));

    res.x.swap(xTrial);
    g.swap(gTrial);
    f = fAccept;
    res.value = f;

    LbfgsRecord r;
    r.iter = iter;
    r.value = f;
    r.gradInfNorm = infNorm(g);
    r.step = aAccept;
    r.valueBefore = f0;
    r.dirDerivBefore = dg0;
    r.dirDerivAfter = dgAccept;
    res.trace.push_back(r);
    if (onAccept) onAccept(iter, res.x, f);

    if (r.gradInfNorm <= params.gradTolerance) {
      res.stop = LbfgsStop::GradientTolerance;
      return res;
    }
  }
  res.stop = LbfgsStop::MaxIterations;
  return res;
}

} // namespace crossgram
