#pragma once

#include <deque>
#include <functional>
#include <span>
#include <vector>

namespace crossgram {

struct LbfgsParams {
  int memory = 10;
  int maxIterations = 500;
  double gradTolerance = 1e-7; // infinity norm
  double c1 = 1e-4;            // sufficient decrease
  double c2 = 0.9;             // curvature
  int maxLineSearchSteps = 20; // objective evaluations per line search
};

enum class LbfgsStop {
  GradientTolerance,
  MaxIterations,
  LineSearchFailed, // best point returned with a warning status
  NonFiniteAbort,   // NaN/Inf value or gradient encountered
};

// Per accepted iteration; carries enough to re-verify the strong Wolfe
// conditions after the fact.
struct LbfgsRecord {
  int iter = 0;
  double value = 0.0;
  double gradInfNorm = 0.0;
  double step = 0.0;          // accepted alpha (0 for the initial record)
  double valueBefore = 0.0;
  double dirDerivBefore = 0.0; // g(x)^T d
  double dirDerivAfter = 0.0;  // g(x + alpha d)^T d
};

struct LbfgsResult {
  std::vector<double> x; // best point found
  double value = 0.0;
  LbfgsStop stop = LbfgsStop::MaxIterations;
  int iterations = 0;
  int abortIteration = -1; // set for NonFiniteAbort
  std::vector<LbfgsRecord> trace;
};

// Evaluates f(x), writing the gradient into grad (same length as x).
using Objective =
    std::function<double(std::span<const double>, std::span<double>)>;

// Invoked for the initial point (iter 0) and after every accepted step.
// The most recent objective evaluation is always at the reported point,
// so callers may cache per-evaluation data and snapshot it here.
using AcceptCallback =
    std::function<void(int iter, std::span<const double> x, double value)>;

struct CurvaturePair {
  std::vector<double> s;
  std::vector<double> y;
  double rho = 0.0; // 1 / (s^T y)
};

// Curvature history. Pairs with s^T y <= 1e-10 |s||y| are skipped, not
// stored; gamma tracks s^T y / y^T y of the last stored pair (1 at start).
struct LbfgsHistory {
  int memory = 10;
  std::deque<CurvaturePair> pairs;
  double gamma = 1.0;

  void push(std::vector<double> s, std::vector<double> y);
};

// Standard two-loop recursion. With empty history returns -gamma * g;
// returns a descent direction whenever g != 0.
std::vector<double> two_loop_direction(const LbfgsHistory& history,
                                       std::span<const double> grad);

LbfgsResult minimize(const Objective& objective, std::vector<double> x0,
                     const LbfgsParams& params = {},
                     const AcceptCallback& onAccept = {});

} // namespace crossgram
