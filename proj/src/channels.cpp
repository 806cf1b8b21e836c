#include "dicap/channels.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace dicap {

namespace {

void check_prob(double v, const char* what) {
  if (!(v >= 0.0 && v <= 1.0))
    throw std::invalid_argument(std::string(what) + " must lie in [0,1]");
}

bool is_fsc(ChannelKind k) {
  return k == ChannelKind::kIsing || k == ChannelKind::kTrapdoor ||
         k == ChannelKind::kNost || k == ChannelKind::kPost;
}

double unif(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace

int ChannelSpec::in_card() const {
  return kind == ChannelKind::kAwgnPeak ? static_cast<int>(points.size()) : 2;
}

int ChannelSpec::out_card() const {
  return kind == ChannelKind::kAwgnPeak ? 0 : 2;
}

int ChannelSpec::state_card() const {
  switch (kind) {
    case ChannelKind::kBsc:
    case ChannelKind::kZ:
    case ChannelKind::kS:
    case ChannelKind::kAwgnPeak:
      return 1;
    default:
      return 2;
  }
}

bool ChannelSpec::is_unifilar() const {
  switch (kind) {
    case ChannelKind::kGilbertElliott:
      return false;
    case ChannelKind::kNost:
      return eta == 0.0;
    default:
      return true;
  }
}

std::string ChannelSpec::name() const {
  auto fmt = [](double v) {
    std::ostringstream os;
    os << v;
    return os.str();
  };
  switch (kind) {
    case ChannelKind::kBsc: return "bsc(p=" + fmt(p) + ")";
    case ChannelKind::kZ: return "z(p=" + fmt(p) + ")";
    case ChannelKind::kS: return "s(p=" + fmt(p) + ")";
    case ChannelKind::kGilbertElliott:
      return "ge(b=" + fmt(b) + ",g=" + fmt(g) + ",p_good=" + fmt(p_good) +
             ",p_bad=" + fmt(p_bad) + ")";
    case ChannelKind::kIsing: return "ising(p=" + fmt(p) + ")";
    case ChannelKind::kTrapdoor: return "trapdoor";
    case ChannelKind::kNost: return "nost(p=" + fmt(p) + ",eta=" + fmt(eta) + ")";
    case ChannelKind::kPost: return "post(p=" + fmt(p) + ")";
    case ChannelKind::kAwgnPeak:
      return "awgn_peak(sigma=" + fmt(sigma) + ",k=" +
             std::to_string(points.size()) + ")";
  }
  return "unknown";
}

ChannelSpec make_bsc(double p) {
  check_prob(p, "bsc p");
  ChannelSpec s;
  s.kind = ChannelKind::kBsc;
  s.p = p;
  return s;
}

ChannelSpec make_z(double p) {
  check_prob(p, "z p");
  ChannelSpec s;
  s.kind = ChannelKind::kZ;
  s.p = p;
  return s;
}

ChannelSpec make_s(double p) {
  check_prob(p, "s p");
  ChannelSpec s;
  s.kind = ChannelKind::kS;
  s.p = p;
  return s;
}

ChannelSpec make_ge(double b, double g, double p_good, double p_bad) {
  check_prob(b, "ge b");
  check_prob(g, "ge g");
  check_prob(p_good, "ge p_good");
  check_prob(p_bad, "ge p_bad");
  if (b + g <= 0.0)
    throw std::invalid_argument("ge: b + g must be positive for a stationary chain");
  ChannelSpec s;
  s.kind = ChannelKind::kGilbertElliott;
  s.b = b;
  s.g = g;
  s.p_good = p_good;
  s.p_bad = p_bad;
  return s;
}

ChannelSpec make_ising(double p) {
  check_prob(p, "ising p");
  ChannelSpec s;
  s.kind = ChannelKind::kIsing;
  s.p = p;
  return s;
}

ChannelSpec make_trapdoor() {
  ChannelSpec s;
  s.kind = ChannelKind::kTrapdoor;
  s.p = 0.5;  // ball drawn uniformly when input and stored ball differ
  return s;
}

ChannelSpec make_nost(double p, double eta) {
  check_prob(p, "nost p");
  check_prob(eta, "nost eta");
  ChannelSpec s;
  s.kind = ChannelKind::kNost;
  s.p = p;
  s.eta = eta;
  return s;
}

ChannelSpec make_post(double p) {
  check_prob(p, "post p");
  ChannelSpec s;
  s.kind = ChannelKind::kPost;
  s.p = p;
  return s;
}

ChannelSpec make_awgn_peak(double sigma, std::vector<double> points) {
  if (sigma <= 0.0) throw std::invalid_argument("awgn: sigma must be positive");
  if (points.size() < 2)
    throw std::invalid_argument("awgn: need at least 2 constellation points");
  ChannelSpec s;
  s.kind = ChannelKind::kAwgnPeak;
  s.sigma = sigma;
  s.points = std::move(points);
  return s;
}

ChannelState init_state(const ChannelSpec& spec, Rng& rng) {
  if (spec.kind == ChannelKind::kGilbertElliott) {
    double pi_good = spec.g / (spec.b + spec.g);
    return {unif(rng) < pi_good ? 0 : 1};
  }
  return {0};
}

double kernel_prob(const ChannelSpec& spec, int s, int x, int y) {
  if (x < 0 || x > 1 || y < 0 || y > 1 || s < 0 || s >= spec.state_card())
    throw std::invalid_argument("kernel_prob: symbol out of alphabet for " +
                                spec.name());
  switch (spec.kind) {
    case ChannelKind::kBsc:
      return y == x ? 1.0 - spec.p : spec.p;
    case ChannelKind::kZ:  // input 0 noiseless; 1 decays to 0 w.p. p
      if (x == 0) return y == 0 ? 1.0 : 0.0;
      return y == 1 ? 1.0 - spec.p : spec.p;
    case ChannelKind::kS:  // mirror of Z
      if (x == 1) return y == 1 ? 1.0 : 0.0;
      return y == 0 ? 1.0 - spec.p : spec.p;
    case ChannelKind::kGilbertElliott: {
      double flip = s == 0 ? spec.p_good : spec.p_bad;
      return y == x ? 1.0 - flip : flip;
    }
    case ChannelKind::kIsing:
    case ChannelKind::kTrapdoor:
    case ChannelKind::kNost:
    case ChannelKind::kPost:
      // shared kernel: clean when x matches the state, else x survives
      // w.p. 1-p and the state symbol leaks out w.p. p
      if (x == s) return y == x ? 1.0 : 0.0;
      return y == x ? 1.0 - spec.p : spec.p;
    case ChannelKind::kAwgnPeak:
      throw std::invalid_argument("kernel_prob: continuous output channel");
  }
  throw std::invalid_argument("kernel_prob: unknown kind");
}

int next_state(const ChannelSpec& spec, int s, int x, int y) {
  if (!spec.is_unifilar())
    throw std::invalid_argument("next_state: " + spec.name() +
                                " state evolution is not deterministic");
  switch (spec.kind) {
    case ChannelKind::kBsc:
    case ChannelKind::kZ:
    case ChannelKind::kS:
    case ChannelKind::kAwgnPeak:
      return 0;
    case ChannelKind::kIsing:
      return x;
    case ChannelKind::kTrapdoor:
      return s ^ x ^ y;
    case ChannelKind::kNost:  // eta == 0 here
    case ChannelKind::kPost:
      return y;
    default:
      throw std::invalid_argument("next_state: unsupported kind");
  }
}

std::pair<int, ChannelState> channel_step(const ChannelSpec& spec,
                                          ChannelState state, int x, Rng& rng) {
  if (spec.kind == ChannelKind::kAwgnPeak)
    throw std::invalid_argument("channel_step: use awgn_sample for continuous output");
  if (x < 0 || x > 1)
    throw std::invalid_argument("channel_step: invalid input symbol " +
                                std::to_string(x));
  double p1 = kernel_prob(spec, state.s, x, 1);
  int y = unif(rng) < p1 ? 1 : 0;
  int s_next;
  switch (spec.kind) {
    case ChannelKind::kGilbertElliott:
      s_next = state.s == 0 ? (unif(rng) < spec.b ? 1 : 0)
                            : (unif(rng) < spec.g ? 0 : 1);
      break;
    case ChannelKind::kNost:
      // state is a Z_eta-noised copy of the output
      s_next = y == 0 ? 0 : (unif(rng) < spec.eta ? 0 : 1);
      break;
    default:
      s_next = next_state(spec, state.s, x, y);
      break;
  }
  return {y, ChannelState{s_next}};
}

double awgn_sample(const ChannelSpec& spec, int i, Rng& rng) {
  if (spec.kind != ChannelKind::kAwgnPeak)
    throw std::invalid_argument("awgn_sample: not an AWGN spec");
  if (i < 0 || i >= spec.in_card())
    throw std::invalid_argument("awgn_sample: point index out of range");
  std::normal_distribution<double> noise(0.0, spec.sigma);
  return spec.points[static_cast<std::size_t>(i)] + noise(rng);
}

int sample_from_pmf(const VecXd& pmf, Rng& rng) {
  double u = unif(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (int i = 0; i < pmf.size(); ++i) {
    if (pmf(i) > 0.0) last_positive = i;
    acc += pmf(i);
    if (u < acc) return i;
  }
  return last_positive;  // u landed on accumulated rounding slack
}

Trajectory sample_trajectory(const ChannelSpec& spec, Policy& policy, int n,
                             bool feedback, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_trajectory: n must be >= 1");
  int k = spec.in_card();
  int ycard = spec.out_card();
  if (ycard < 2)
    throw std::invalid_argument("sample_trajectory: discrete channels only");
  Trajectory traj;
  traj.x.reserve(n);
  traj.y.reserve(n);
  traj.s.reserve(n);
  traj.ytilde.reserve(n);
  traj.pmf.reserve(n);
  traj.logp.reserve(n);
  policy.reset();
  ChannelState state = init_state(spec, rng);
  int x_prev = -1, y_prev = -1;
  for (int t = 0; t < n; ++t) {
    VecXd p = policy.next_pmf(x_prev, feedback ? y_prev : -1);
    if (p.size() != k || p.minCoeff() < 0.0 || std::abs(p.sum() - 1.0) > 1e-9)
      throw std::invalid_argument(
          "sample_trajectory: policy emitted a non-simplex PMF at step " +
          std::to_string(t + 1));
    int x = sample_from_pmf(p, rng);
    traj.s.push_back(state.s);  // state entering this channel use
    auto [y, next] = channel_step(spec, state, x, rng);
    state = next;
    int yt = std::min(static_cast<int>(unif(rng) * ycard), ycard - 1);
    traj.x.push_back(x);
    traj.y.push_back(y);
    traj.ytilde.push_back(yt);
    traj.logp.push_back(std::log(p(x)));
    traj.pmf.push_back(std::move(p));
    x_prev = x;
    y_prev = y;
  }
  return traj;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  int k = traj.n() > 0 ? static_cast<int>(traj.pmf[0].size()) : 0;
  os << "t,x,y,s";
  for (int i = 0; i < k; ++i) os << ",p_" << i;
  os << "\n";
  os << std::setprecision(12);
  for (int t = 0; t < traj.n(); ++t) {
    os << (t + 1) << "," << traj.x[t] << "," << traj.y[t] << "," << traj.s[t];
    for (int i = 0; i < k; ++i) os << "," << traj.pmf[t](i);
    os << "\n";
  }
  if (!os) throw std::runtime_error("write_trajectory_csv: write failed");
}

// ---------------------------------------------------------------------------
// Oracles

double binary_entropy_bits(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

namespace {

double z_capacity_bits(double p) {
  if (p >= 1.0) return 0.0;
  return std::log2(1.0 + (1.0 - p) * std::pow(p, p / (1.0 - p)));
}

}  // namespace

MatXd kernel_matrix(const ChannelSpec& spec) {
  if (spec.state_card() != 1 || spec.out_card() != 2)
    throw std::invalid_argument("kernel_matrix: memoryless binary kinds only");
  MatXd k(2, 2);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < 2; ++y) k(y, x) = kernel_prob(spec, 0, x, y);
  return k;
}

double memoryless_mi(const ChannelSpec& spec, const VecXd& pmf) {
  MatXd k = kernel_matrix(spec);
  if (pmf.size() != k.cols())
    throw std::invalid_argument("memoryless_mi: PMF size mismatch");
  VecXd py = k * pmf;
  double mi = 0.0;
  for (int x = 0; x < k.cols(); ++x)
    for (int y = 0; y < k.rows(); ++y) {
      double joint = pmf(x) * k(y, x);
      if (joint > 0.0) mi += joint * std::log2(k(y, x) / py(y));
    }
  return mi;
}

GridCapacity grid_search_capacity(const ChannelSpec& spec, double step) {
  GridCapacity best;
  best.bits = -1.0;
  for (double q = 0.0; q <= 1.0 + 1e-12; q += step) {
    double q1 = std::min(q, 1.0);
    VecXd pmf(2);
    pmf << 1.0 - q1, q1;
    double mi = memoryless_mi(spec, pmf);
    if (mi > best.bits) {
      best.bits = mi;
      best.p1 = q1;
    }
  }
  return best;
}

double ge_noise_entropy_rate(const ChannelSpec& spec, int n, std::uint64_t seed) {
  if (spec.kind != ChannelKind::kGilbertElliott)
    throw std::invalid_argument("ge_noise_entropy_rate: GE channels only");
  Rng rng = make_rng(seed);
  double pi_good = spec.g / (spec.b + spec.g);
  int s = unif(rng) < pi_good ? 0 : 1;
  double belief = pi_good;  // P(state = Good | past noise)
  double acc = 0.0;
  const int burn = 1000;
  for (int t = 0; t < burn + n; ++t) {
    double flip = s == 0 ? spec.p_good : spec.p_bad;
    int z = unif(rng) < flip ? 1 : 0;
    double pg = z == 1 ? spec.p_good : 1.0 - spec.p_good;
    double pb = z == 1 ? spec.p_bad : 1.0 - spec.p_bad;
    double pz = belief * pg + (1.0 - belief) * pb;
    if (t >= burn) acc -= std::log2(pz);
    double posterior = belief * pg / pz;
    belief = posterior * (1.0 - spec.b) + (1.0 - posterior) * spec.g;
    s = s == 0 ? (unif(rng) < spec.b ? 1 : 0) : (unif(rng) < spec.g ? 0 : 1);
  }
  return acc / n;
}

std::optional<double> exact_capacity_oracle(const ChannelSpec& spec,
                                            bool feedback) {
  switch (spec.kind) {
    case ChannelKind::kBsc:
      return 1.0 - binary_entropy_bits(spec.p);
    case ChannelKind::kZ:
    case ChannelKind::kS:
      return z_capacity_bits(spec.p);
    case ChannelKind::kPost:
      // feedback does not raise POST capacity; both equal the Z value
      return z_capacity_bits(spec.p);
    case ChannelKind::kTrapdoor:
      if (feedback) return std::log2((1.0 + std::sqrt(5.0)) / 2.0);
      return std::nullopt;  // no closed form feedforward
    case ChannelKind::kGilbertElliott:
      // noise is input-independent, so feedback does not change capacity
      return 1.0 - ge_noise_entropy_rate(spec, 2'000'000, 0x9e3779b9U);
    default:
      return std::nullopt;
  }
}

}  // namespace dicap
