#ifndef ADDREG_SIMLAB_HPP
#define ADDREG_SIMLAB_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "addreg/model.hpp"
#include "addreg/solver.hpp"
#include "addreg/tuning.hpp"

namespace addreg {

// Deterministic generator used everywhere in the simulation lane.  The
// mapping from engine words to doubles is pinned down here (not left to
// std::uniform_real_distribution) so that outputs are bit-identical across
// standard libraries and across serial/parallel execution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // [0, 1) with 53 random bits
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // standard normal via Box-Muller; the unused member of each pair is
  // cached so consecutive calls cost one pair per two draws
  double normal();

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stateless hash combining a base seed with two stream indices, used to
// give every (cell, purpose) its own independent engine.  Splitmix-style
// finalizer, so nearby indices land far apart.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b);

// Covariate laws on [0, 1].  TiltedLinear has density 1/2 + x, bounded
// below by 1/2, and exercises the non-uniform code paths.
enum class CovariateDist { Uniform, TiltedLinear };

double dist_density(CovariateDist dist, double x);
double dist_sample(CovariateDist dist, Rng& rng);

// One ground-truth component shape on [0, 1].  Step and PiecewiseLinear
// have canonical builds controlled by `jumps`; Sine is sampled onto a
// dense piecewise-linear table with `cycles` full periods; CustomTable
// takes the knots/values/rule verbatim.
struct Shape {
  enum class Kind { Step, PiecewiseLinear, Sine, CustomTable };

  Kind kind = Kind::Step;
  int jumps = 1;
  int cycles = 1;
  std::vector<double> knots;
  std::vector<double> values;
  EvalRule rule = EvalRule::StepRightContinuous;

  void validate() const;
};

// Geometrically decaying target norms a_j proportional to j^{-(1/q)(1+0.01)},
// scaled so a_1 = scale.  The small excess over 1/q keeps sum a_j^q finite
// as the count grows, so dense truths have a well-defined q-budget.
std::vector<double> decaying_amplitudes(std::size_t count, double q, double scale);

// Full description of a synthetic problem.  `active` lists the components
// carrying signal (0-based, strictly increasing); `shapes` aligns with it.
// `amplitudes` are target population norms for the active components; empty
// means the shapes are used at their natural size.  `q` is the sparsity
// exponent the truth is built for; it only affects the reported budget and
// the amplitude schedule, never the noise.
struct Scenario {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::size_t> active;
  std::vector<Shape> shapes;
  std::vector<double> amplitudes;
  double q = 0.0;
  double noise_sd = 1.0;
  bool bounded_noise = false;
  CovariateDist covariate_dist = CovariateDist::Uniform;
  std::uint64_t seed = 0;

  void validate() const;
};

// Population mean and norm of one component under a covariate law, by
// Gauss-Legendre panels between the knots.  The shapes in play are
// piecewise polynomials and both densities are linear, so the panel rule
// is exact, not approximate.
double dist_mean(const ComponentFit& fit, CovariateDist dist);
double q_norm(const ComponentFit& fit, CovariateDist dist);

// Centered, rescaled truth component: the shape is built, its population
// mean under `dist` subtracted, and, when amplitude > 0, the values scaled
// so the population norm equals amplitude exactly.
ComponentFit build_truth_component(const Shape& shape, CovariateDist dist,
                                   double amplitude);

struct GeneratedData {
  Dataset data;
  AdditiveFit truth;
  // per-active-component population norms and the totals they imply:
  // mf sums the total variation of the truth components, mq sums the
  // q-th powers of their population norms (their count when q = 0)
  std::vector<double> component_norms;
  double mf = 0.0;
  double mq = 0.0;
};

// Draw a dataset from the scenario: covariates column by column, then one
// noise pass.  Deterministic in scenario.seed.  The returned truth has the
// scenario's components at the active slots, intercept zero.
GeneratedData generate(const Scenario& scenario);

// In-sample squared error: mean over the design points of the squared
// difference between the two additive predictions.
double error_n(const AdditiveFit& fit, const AdditiveFit& truth, const Dataset& data);

struct McEstimate {
  double value = 0.0;
  double stderr_value = 0.0;
  std::size_t n_draws = 0;
};

// Population squared error by Monte Carlo: n_mc fresh covariate vectors,
// each coordinate drawn from `dist`.  Draws are organized in fixed-size
// blocks with per-block engines so the estimate is independent of thread
// count; value is the mean squared difference, stderr_value its standard
// error.
McEstimate error_Q_mc(const AdditiveFit& fit, const AdditiveFit& truth,
                      CovariateDist dist, std::size_t n_mc, std::uint64_t seed);

// Population squared size of a centered additive function: intercept^2
// plus the sum of per-component second moments.  Cross terms vanish only
// because the components are centered under `dist`; do not call this on
// fits whose components are centered in the empirical metric instead.
double q_norm_sq_additive(const AdditiveFit& fit, CovariateDist dist);

struct SlopeFit {
  double slope = 0.0;
  double stderr_value = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares of log(y) on log(x); inputs must be positive.
SlopeFit loglog_slope(std::span<const double> xs, std::span<const double> ys);

// Everything one rate study needs: the scenario template (its n is
// overwritten per grid point, its seed mixed per cell), the fitting
// classes, and the tuning knobs forwarded to build_plan.
struct RateStudyConfig {
  Scenario scenario;
  std::vector<std::size_t> n_grid;
  std::size_t reps = 3;
  std::vector<ComponentClass> classes;
  double q = 0.0;
  double c1 = 1.0;
  double a0 = 2.0;
  double epsilon = 0.1;
  double b0star = 1.0;
  TuningVariant variant = TuningVariant::adaptive();
  FitOptions fit_options;
  std::size_t n_mc = 4096;
  bool parallel = true;

  void validate() const;
};

struct RateStudyResult {
  std::vector<std::size_t> grid;
  std::size_t reps = 0;
  // cell tables indexed [grid point][replicate]; failed cells hold NaN in
  // the error tables and a nonempty message in `failures`
  std::vector<std::vector<double>> errors_n;
  std::vector<std::vector<double>> errors_q;
  std::vector<std::vector<std::string>> failures;
  // log-log slopes of the per-n mean errors, with standard errors
  SlopeFit slope_n;
  SlopeFit slope_q;
  // set when a mean error underflows to numerical zero, which makes the
  // log-log regression meaningless (noiseless or unpenalized runs)
  bool degenerate = false;
};

// Fit every (n, rep) cell independently: generate, build_plan, fit, score.
// Cells fan out across threads when config.parallel is set; results are
// keyed by cell, so the serial and parallel paths agree bit for bit.
RateStudyResult rate_study(const RateStudyConfig& config);

}  // namespace addreg

#endif
