#include "dicap/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dicap {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw std::invalid_argument("config: " + field + ": " + msg);
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(trim(tok));
  return out;
}

double to_double(const std::string& field, const std::string& tok, double lo,
                 double hi) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    fail(field, "not a number: '" + tok + "'");
  if (v < lo || v > hi)
    fail(field, "value " + tok + " outside [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  return v;
}

int to_int(const std::string& field, const std::string& tok, long lo,
           long hi) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    fail(field, "not an integer: '" + tok + "'");
  if (v < lo || v > hi)
    fail(field, "value " + tok + " outside [" + std::to_string(lo) + ", " +
                    std::to_string(hi) + "]");
  return static_cast<int>(v);
}

std::uint64_t to_u64(const std::string& field, const std::string& tok) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || p != tok.data() + tok.size())
    fail(field, "not a nonnegative integer: '" + tok + "'");
  return v;
}

bool to_bool(const std::string& field, const std::string& tok) {
  if (tok == "true") return true;
  if (tok == "false") return false;
  fail(field, "expected true or false, got '" + tok + "'");
}

std::vector<double> to_list(const std::string& field, const std::string& raw,
                            double lo, double hi) {
  std::vector<double> out;
  for (const std::string& tok : split_commas(raw))
    out.push_back(to_double(field, tok, lo, hi));
  if (out.empty()) fail(field, "empty value list");
  return out;
}

std::string to_choice(const std::string& field, const std::string& tok,
                      const std::vector<std::string>& options) {
  if (std::find(options.begin(), options.end(), tok) != options.end())
    return tok;
  std::string all;
  for (const std::string& o : options) all += (all.empty() ? "" : ", ") + o;
  fail(field, "'" + tok + "' is not one of {" + all + "}");
}

const std::vector<std::string> kCommands{"estimate", "optimize", "qgraph",
                                         "shape",    "oracle",   "lemma2"};
const std::vector<std::string> kKinds{"bsc",   "z",        "s",    "ge",
                                      "ising", "trapdoor", "nost", "post"};

void assign_channel(ChannelSection& c, const std::string& key,
                    const std::string& v) {
  std::string f = "channel." + key;
  if (key == "kind") c.kind = to_choice(f, v, kKinds);
  else if (key == "p") c.p = to_list(f, v, 0.0, 1.0);
  else if (key == "eta") c.eta = to_list(f, v, 0.0, 1.0);
  else if (key == "b") c.b = to_list(f, v, 0.0, 1.0);
  else if (key == "g") c.g = to_list(f, v, 0.0, 1.0);
  else if (key == "p_good") c.p_good = to_list(f, v, 0.0, 1.0);
  else if (key == "p_bad") c.p_bad = to_list(f, v, 0.0, 1.0);
  else fail(f, "unknown key");
}

void assign_run(RunSection& r, const std::string& key, const std::string& v) {
  std::string f = "run." + key;
  if (key == "command") r.command = to_choice(f, v, kCommands);
  else if (key == "feedback") r.feedback = to_bool(f, v);
  else if (key == "estimator") r.estimator = to_choice(f, v, {"dine", "mine"});
  else if (key == "seed") r.seed = to_u64(f, v);
  else if (key == "workers") r.workers = to_int(f, v, 1, 4096);
  else if (key == "out") r.out = v;
  else fail(f, "unknown key");
}

void assign_train(TrainSection& t, const std::string& key,
                  const std::string& v) {
  std::string f = "train." + key;
  if (key == "T") t.T = to_int(f, v, 1, 1'000'000);
  else if (key == "n") t.n = to_int(f, v, 2, 100'000'000);
  else if (key == "batch") t.batch = to_int(f, v, 1, 100'000);
  else if (key == "ratio") t.ratio = to_int(f, v, 1, 10'000);
  else if (key == "iters") t.iters = to_int(f, v, 1, 100'000'000);
  else if (key == "estimator_lr") t.estimator_lr = to_double(f, v, 1e-12, 10.0);
  else if (key == "policy_lr") t.policy_lr = to_double(f, v, 1e-12, 10.0);
  else if (key == "epsilon") t.epsilon = to_double(f, v, 0.0, 0.5);
  else if (key == "gen_hidden") t.gen_hidden = to_int(f, v, 1, 100'000);
  else if (key == "est_hidden") t.est_hidden = to_int(f, v, 1, 100'000);
  else if (key == "est_fc_width") t.est_fc_width = to_int(f, v, 1, 100'000);
  else if (key == "est_fc_depth") t.est_fc_depth = to_int(f, v, 1, 100);
  else if (key == "warmup_frac") t.warmup_frac = to_double(f, v, 0.0, 0.9);
  else if (key == "lme_anchor") t.lme_anchor = to_double(f, v, 0.0, 100.0);
  else if (key == "eval_len") t.eval_len = to_int(f, v, 10'000, 1'000'000'000);
  else if (key == "plateau_window") t.plateau_window = to_int(f, v, 1, 100'000'000);
  else if (key == "plateau_rel") t.plateau_rel = to_double(f, v, 1e-15, 1.0);
  else if (key == "input_pmf") t.input_pmf = to_list(f, v, 0.0, 1.0);
  else fail(f, "unknown key");
}

void assign_qgraph(QGraphSection& q, const std::string& key,
                   const std::string& v) {
  std::string f = "qgraph." + key;
  if (key == "qnet_width") q.qnet_width = to_int(f, v, 1, 100'000);
  else if (key == "qnet_depth") q.qnet_depth = to_int(f, v, 1, 100);
  else if (key == "qnet_batch") q.qnet_batch = to_int(f, v, 1, 100'000);
  else if (key == "qnet_rollout_len") q.qnet_rollout_len = to_int(f, v, 2, 100'000'000);
  else if (key == "qnet_iters") q.qnet_iters = to_int(f, v, 1, 100'000'000);
  else if (key == "qnet_lr") q.qnet_lr = to_double(f, v, 1e-12, 10.0);
  else if (key == "extract_n") q.extract_n = to_int(f, v, 100'000, 1'000'000'000);
  else if (key == "k_max") q.k_max = to_int(f, v, 1, 1000);
  else if (key == "purity_min") q.purity_min = to_double(f, v, 1e-9, 1.0);
  else if (key == "restarts") q.restarts = to_int(f, v, 1, 100'000);
  else if (key == "step_init") q.step_init = to_double(f, v, 1e-9, 1.0);
  else if (key == "step_min") q.step_min = to_double(f, v, 1e-12, 1.0);
  else if (key == "tol_nats") q.tol_nats = to_double(f, v, 0.0, 1.0);
  else if (key == "max_sweeps") q.max_sweeps = to_int(f, v, 1, 100'000'000);
  else fail(f, "unknown key");
}

void assign_shaping(ShapingSection& s, const std::string& key,
                    const std::string& v) {
  std::string f = "shaping." + key;
  if (key == "constellation") s.constellation = to_choice(f, v, {"pam", "qam"});
  else if (key == "order") s.order = to_int(f, v, 2, 1'000'000);
  else if (key == "amplitude") s.amplitude = to_double(f, v, 1e-9, 1e9);
  else if (key == "snr_db") s.snr_db = to_list(f, v, -200.0, 200.0);
  else if (key == "iters") s.iters = to_int(f, v, 1, 100'000'000);
  else if (key == "n") s.n = to_int(f, v, 4, 100'000'000);
  else if (key == "ratio") s.ratio = to_int(f, v, 1, 10'000);
  else if (key == "mine_width") s.mine_width = to_int(f, v, 1, 100'000);
  else if (key == "mine_depth") s.mine_depth = to_int(f, v, 1, 100);
  else if (key == "mine_lr") s.mine_lr = to_double(f, v, 1e-12, 10.0);
  else if (key == "pmf_lr") s.pmf_lr = to_double(f, v, 1e-12, 10.0);
  else if (key == "warmup_frac") s.warmup_frac = to_double(f, v, 0.0, 1.0);
  else if (key == "decay_frac") s.decay_frac = to_double(f, v, 0.0, 1.0);
  else if (key == "eval_n") s.eval_n = to_int(f, v, 4, 1'000'000'000);
  else if (key == "quad_order") s.quad_order = to_int(f, v, 20, 10'000);
  else fail(f, "unknown key");
}

void assign_lemma2(Lemma2Section& l, const std::string& key,
                   const std::string& v) {
  std::string f = "lemma2." + key;
  if (key == "m_max") l.m_max = to_int(f, v, 1, 500);
  else if (key == "y_card") l.y_card = to_int(f, v, 2, 100);
  else fail(f, "unknown key");
}

void validate_cross(const ExperimentConfig& cfg) {
  if (!cfg.train.input_pmf.empty()) {
    double sum = 0.0;
    for (double v : cfg.train.input_pmf) sum += v;
    if (std::abs(sum - 1.0) > 1e-9)
      fail("train.input_pmf", "entries must sum to 1");
  }
  if (cfg.shaping.warmup_frac + cfg.shaping.decay_frac > 1.0)
    fail("shaping.warmup_frac", "warmup_frac + decay_frac must be <= 1");
  if (cfg.qgraph.step_min > cfg.qgraph.step_init)
    fail("qgraph.step_min", "must not exceed step_init");
}

// -- canonical rendering ----------------------------------------------------

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

std::string fmt(const std::vector<double>& vs) {
  std::string out;
  for (double v : vs) out += (out.empty() ? "" : ", ") + fmt(v);
  return out;
}

std::string fmt(bool v) { return v ? "true" : "false"; }

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        fail("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "channel" && section != "run" && section != "train" &&
          section != "qgraph" && section != "shaping" && section != "lemma2")
        fail("line " + std::to_string(lineno),
             "unknown section [" + section + "]");
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail("line " + std::to_string(lineno), "expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail("line " + std::to_string(lineno), "empty key");
    if (section.empty())
      fail("line " + std::to_string(lineno), "key before any [section]");
    if (section == "channel") assign_channel(cfg.channel, key, value);
    else if (section == "run") assign_run(cfg.run, key, value);
    else if (section == "train") assign_train(cfg.train, key, value);
    else if (section == "qgraph") assign_qgraph(cfg.qgraph, key, value);
    else if (section == "shaping") assign_shaping(cfg.shaping, key, value);
    else assign_lemma2(cfg.lemma2, key, value);
  }
  validate_cross(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open file: " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_config_text(buf.str());
}

std::string config_echo(const ExperimentConfig& cfg) {
  std::string s;
  s += "[run]\n";
  if (!cfg.run.command.empty()) s += "command = " + cfg.run.command + "\n";
  s += "feedback = " + fmt(cfg.run.feedback) + "\n";
  s += "estimator = " + cfg.run.estimator + "\n";
  s += "seed = " + std::to_string(cfg.run.seed) + "\n";
  s += "workers = " + std::to_string(cfg.run.workers) + "\n";
  if (!cfg.run.out.empty()) s += "out = " + cfg.run.out + "\n";

  s += "\n[channel]\n";
  s += "kind = " + cfg.channel.kind + "\n";
  s += "p = " + fmt(cfg.channel.p) + "\n";
  s += "eta = " + fmt(cfg.channel.eta) + "\n";
  s += "b = " + fmt(cfg.channel.b) + "\n";
  s += "g = " + fmt(cfg.channel.g) + "\n";
  s += "p_good = " + fmt(cfg.channel.p_good) + "\n";
  s += "p_bad = " + fmt(cfg.channel.p_bad) + "\n";

  s += "\n[train]\n";
  s += "T = " + std::to_string(cfg.train.T) + "\n";
  s += "n = " + std::to_string(cfg.train.n) + "\n";
  s += "batch = " + std::to_string(cfg.train.batch) + "\n";
  s += "ratio = " + std::to_string(cfg.train.ratio) + "\n";
  s += "iters = " + std::to_string(cfg.train.iters) + "\n";
  s += "estimator_lr = " + fmt(cfg.train.estimator_lr) + "\n";
  s += "policy_lr = " + fmt(cfg.train.policy_lr) + "\n";
  s += "epsilon = " + fmt(cfg.train.epsilon) + "\n";
  s += "gen_hidden = " + std::to_string(cfg.train.gen_hidden) + "\n";
  s += "est_hidden = " + std::to_string(cfg.train.est_hidden) + "\n";
  s += "est_fc_width = " + std::to_string(cfg.train.est_fc_width) + "\n";
  s += "est_fc_depth = " + std::to_string(cfg.train.est_fc_depth) + "\n";
  s += "warmup_frac = " + fmt(cfg.train.warmup_frac) + "\n";
  s += "lme_anchor = " + fmt(cfg.train.lme_anchor) + "\n";
  s += "eval_len = " + std::to_string(cfg.train.eval_len) + "\n";
  s += "plateau_window = " + std::to_string(cfg.train.plateau_window) + "\n";
  s += "plateau_rel = " + fmt(cfg.train.plateau_rel) + "\n";
  if (!cfg.train.input_pmf.empty())
    s += "input_pmf = " + fmt(cfg.train.input_pmf) + "\n";

  s += "\n[qgraph]\n";
  s += "qnet_width = " + std::to_string(cfg.qgraph.qnet_width) + "\n";
  s += "qnet_depth = " + std::to_string(cfg.qgraph.qnet_depth) + "\n";
  s += "qnet_batch = " + std::to_string(cfg.qgraph.qnet_batch) + "\n";
  s += "qnet_rollout_len = " + std::to_string(cfg.qgraph.qnet_rollout_len) + "\n";
  s += "qnet_iters = " + std::to_string(cfg.qgraph.qnet_iters) + "\n";
  s += "qnet_lr = " + fmt(cfg.qgraph.qnet_lr) + "\n";
  s += "extract_n = " + std::to_string(cfg.qgraph.extract_n) + "\n";
  s += "k_max = " + std::to_string(cfg.qgraph.k_max) + "\n";
  s += "purity_min = " + fmt(cfg.qgraph.purity_min) + "\n";
  s += "restarts = " + std::to_string(cfg.qgraph.restarts) + "\n";
  s += "step_init = " + fmt(cfg.qgraph.step_init) + "\n";
  s += "step_min = " + fmt(cfg.qgraph.step_min) + "\n";
  s += "tol_nats = " + fmt(cfg.qgraph.tol_nats) + "\n";
  s += "max_sweeps = " + std::to_string(cfg.qgraph.max_sweeps) + "\n";

  s += "\n[shaping]\n";
  s += "constellation = " + cfg.shaping.constellation + "\n";
  s += "order = " + std::to_string(cfg.shaping.order) + "\n";
  s += "amplitude = " + fmt(cfg.shaping.amplitude) + "\n";
  s += "snr_db = " + fmt(cfg.shaping.snr_db) + "\n";
  s += "iters = " + std::to_string(cfg.shaping.iters) + "\n";
  s += "n = " + std::to_string(cfg.shaping.n) + "\n";
  s += "ratio = " + std::to_string(cfg.shaping.ratio) + "\n";
  s += "mine_width = " + std::to_string(cfg.shaping.mine_width) + "\n";
  s += "mine_depth = " + std::to_string(cfg.shaping.mine_depth) + "\n";
  s += "mine_lr = " + fmt(cfg.shaping.mine_lr) + "\n";
  s += "pmf_lr = " + fmt(cfg.shaping.pmf_lr) + "\n";
  s += "warmup_frac = " + fmt(cfg.shaping.warmup_frac) + "\n";
  s += "decay_frac = " + fmt(cfg.shaping.decay_frac) + "\n";
  s += "eval_n = " + std::to_string(cfg.shaping.eval_n) + "\n";
  s += "quad_order = " + std::to_string(cfg.shaping.quad_order) + "\n";

  s += "\n[lemma2]\n";
  s += "m_max = " + std::to_string(cfg.lemma2.m_max) + "\n";
  s += "y_card = " + std::to_string(cfg.lemma2.y_card) + "\n";
  return s;
}

std::vector<ChannelSpec> channel_grid(const ExperimentConfig& cfg) {
  const ChannelSection& c = cfg.channel;
  std::size_t len = 1;
  for (const std::vector<double>* lst :
       {&c.p, &c.eta, &c.b, &c.g, &c.p_good, &c.p_bad})
    len = std::max(len, lst->size());
  auto at = [&](const std::vector<double>& lst, std::size_t i,
                const char* name) {
    if (lst.size() != 1 && lst.size() != len)
      fail(std::string("channel.") + name,
           "sweep lists must share one length");
    return lst.size() == 1 ? lst[0] : lst[i];
  };
  std::vector<ChannelSpec> out;
  for (std::size_t i = 0; i < len; ++i) {
    try {
      if (c.kind == "bsc") out.push_back(make_bsc(at(c.p, i, "p")));
      else if (c.kind == "z") out.push_back(make_z(at(c.p, i, "p")));
      else if (c.kind == "s") out.push_back(make_s(at(c.p, i, "p")));
      else if (c.kind == "ge")
        out.push_back(make_ge(at(c.b, i, "b"), at(c.g, i, "g"),
                              at(c.p_good, i, "p_good"),
                              at(c.p_bad, i, "p_bad")));
      else if (c.kind == "ising") out.push_back(make_ising(at(c.p, i, "p")));
      else if (c.kind == "trapdoor") out.push_back(make_trapdoor());
      else if (c.kind == "nost")
        out.push_back(make_nost(at(c.p, i, "p"), at(c.eta, i, "eta")));
      else out.push_back(make_post(at(c.p, i, "p")));
    } catch (const std::invalid_argument& e) {
      if (std::string(e.what()).rfind("config:", 0) == 0) throw;
      fail("channel", e.what());
    }
  }
  return out;
}

PolicyGradConfig to_policy_grad_config(const ExperimentConfig& cfg) {
  PolicyGradConfig p;
  p.mode = cfg.run.estimator == "mine" ? EstimatorMode::kMine
                                       : EstimatorMode::kDine;
  p.T = cfg.train.T;
  p.n = cfg.train.n;
  p.batch = cfg.train.batch;
  p.ratio = cfg.train.ratio;
  p.iters = cfg.train.iters;
  p.estimator_lr = cfg.train.estimator_lr;
  p.policy_lr = cfg.train.policy_lr;
  p.epsilon = cfg.train.epsilon;
  p.gen_hidden = cfg.train.gen_hidden;
  p.est_hidden = cfg.train.est_hidden;
  p.est_fc_width = cfg.train.est_fc_width;
  p.est_fc_depth = cfg.train.est_fc_depth;
  p.warmup_frac = cfg.train.warmup_frac;
  p.lme_anchor = cfg.train.lme_anchor;
  p.eval_len = cfg.train.eval_len;
  p.plateau_window = cfg.train.plateau_window;
  p.plateau_rel = cfg.train.plateau_rel;
  p.seed = cfg.run.seed;
  p.workers = cfg.run.workers;
  return p;
}

DineTrainConfig to_dine_train_config(const ExperimentConfig& cfg) {
  DineTrainConfig d;
  d.hidden = cfg.train.est_hidden;
  d.fc_width = cfg.train.est_fc_width;
  d.fc_depth = cfg.train.est_fc_depth;
  d.batch = cfg.train.batch;
  d.rollout_len = cfg.train.n;
  d.iters = cfg.train.iters;
  d.lr = cfg.train.estimator_lr;
  d.warmup_frac = cfg.train.warmup_frac;
  d.lme_anchor = cfg.train.lme_anchor;
  d.eval_len = cfg.train.eval_len;
  d.seed = cfg.run.seed;
  d.plateau_window = cfg.train.plateau_window;
  d.plateau_rel = cfg.train.plateau_rel;
  d.workers = cfg.run.workers;
  return d;
}

QNetTrainConfig to_qnet_train_config(const ExperimentConfig& cfg) {
  QNetTrainConfig q;
  q.width = cfg.qgraph.qnet_width;
  q.depth = cfg.qgraph.qnet_depth;
  q.batch = cfg.qgraph.qnet_batch;
  q.rollout_len = cfg.qgraph.qnet_rollout_len;
  q.iters = cfg.qgraph.qnet_iters;
  q.lr = cfg.qgraph.qnet_lr;
  q.seed = derive_seed(cfg.run.seed, 7001);
  q.workers = cfg.run.workers;
  return q;
}

QBoundConfig to_qbound_config(const ExperimentConfig& cfg) {
  QBoundConfig b;
  b.restarts = cfg.qgraph.restarts;
  b.step_init = cfg.qgraph.step_init;
  b.step_min = cfg.qgraph.step_min;
  b.tol_nats = cfg.qgraph.tol_nats;
  b.max_sweeps = cfg.qgraph.max_sweeps;
  b.seed = derive_seed(cfg.run.seed, 7002);
  b.workers = cfg.run.workers;
  return b;
}

ShapingConfig to_shaping_config(const ExperimentConfig& cfg) {
  ShapingConfig s;
  s.iters = cfg.shaping.iters;
  s.n = cfg.shaping.n;
  s.ratio = cfg.shaping.ratio;
  s.mine_width = cfg.shaping.mine_width;
  s.mine_depth = cfg.shaping.mine_depth;
  s.mine_lr = cfg.shaping.mine_lr;
  s.pmf_lr = cfg.shaping.pmf_lr;
  s.warmup_frac = cfg.shaping.warmup_frac;
  s.decay_frac = cfg.shaping.decay_frac;
  s.eval_n = cfg.shaping.eval_n;
  s.quad_order = cfg.shaping.quad_order;
  s.seed = cfg.run.seed;
  s.workers = cfg.run.workers;
  return s;
}

Constellation config_constellation(const ExperimentConfig& cfg) {
  ConstellationKind kind = cfg.shaping.constellation == "qam"
                               ? ConstellationKind::kQam
                               : ConstellationKind::kPam;
  try {
    return make_constellation(kind, cfg.shaping.order, cfg.shaping.amplitude);
  } catch (const std::invalid_argument& e) {
    fail("shaping.order", e.what());
  }
}

}  // namespace dicap
