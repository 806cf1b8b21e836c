#include "dicap/runner.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include "dicap/rng.hpp"

namespace dicap {

namespace fs = std::filesystem;

namespace {

std::string build_id() {
#ifdef DICAP_BUILD_ID
  return DICAP_BUILD_ID;
#else
  return "unknown";
#endif
}

std::string artifact_path(const fs::path& dir, const std::string& base,
                          const std::string& ext, std::size_t j,
                          std::size_t total) {
  std::string name = total == 1 ? base + ext
                                : base + "_" + std::to_string(j) + ext;
  return (dir / name).string();
}

void write_text_atomic(const std::string& path, const std::string& text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + tmp + " for writing");
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

void write_qnet_curve(const std::string& path,
                      const std::vector<double>& loss) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "iter,ce_nats\n";
  f.precision(12);
  for (std::size_t i = 0; i < loss.size(); ++i)
    f << i << ',' << loss[i] << "\n";
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::uint64_t point_seed(const ExperimentConfig& cfg, std::size_t j) {
  return derive_seed(cfg.run.seed, 8000 + static_cast<std::uint64_t>(j));
}

nlohmann::json report_json(const EstimateReport& r) {
  return {{"di_bits", r.i_bits()},
          {"d_y_bits", r.d_y_bits()},
          {"d_xy_bits", r.d_xy_bits()},
          {"se_bits", r.i_se_bits()}};
}

void add_oracle(nlohmann::json& point, const ChannelSpec& spec, bool feedback,
                double estimate_bits) {
  if (std::optional<double> cap = exact_capacity_oracle(spec, feedback)) {
    point["oracle_bits"] = *cap;
    point["abs_err_bits"] = std::abs(estimate_bits - *cap);
  }
}

VecXd fixed_input_pmf(const ExperimentConfig& cfg, const ChannelSpec& spec) {
  int k = spec.in_card();
  if (cfg.train.input_pmf.empty()) return VecXd::Constant(k, 1.0 / k);
  if (static_cast<int>(cfg.train.input_pmf.size()) != k)
    throw std::invalid_argument(
        "config: train.input_pmf: size must equal the channel input "
        "cardinality " +
        std::to_string(k));
  VecXd pmf(k);
  for (int i = 0; i < k; ++i) pmf(i) = cfg.train.input_pmf[i];
  return pmf;
}

void dispatch_estimate(const ExperimentConfig& cfg, const fs::path& out,
                       RunRecord& rec) {
  if (cfg.run.estimator != "dine")
    throw std::invalid_argument(
        "config: run.estimator: estimate always uses dine");
  std::vector<ChannelSpec> specs = channel_grid(cfg);
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t j = 0; j < specs.size(); ++j) {
    const ChannelSpec& spec = specs[j];
    VecXd pmf = fixed_input_pmf(cfg, spec);
    FixedIidPolicy policy(pmf);
    DineTrainConfig dcfg = to_dine_train_config(cfg);
    dcfg.seed = point_seed(cfg, j);
    std::cout << "[dicap] estimate " << spec.name() << " feedback="
              << (cfg.run.feedback ? "true" : "false") << " (point " << j + 1
              << "/" << specs.size() << ", iters " << dcfg.iters << ")\n";
    DineTrainResult res = train_dine(spec, policy, cfg.run.feedback, dcfg);

    std::string curve = artifact_path(out, "curve", ".csv", j, specs.size());
    write_curve_csv(curve, res.curve);
    rec.artifacts.push_back(curve);
    std::string model = artifact_path(out, "model", ".bin", j, specs.size());
    save_model(model, res.model.named());
    rec.artifacts.push_back(model);

    nlohmann::json point = report_json(res.report);
    point["channel"] = spec.name();
    point["diverged"] = res.diverged;
    add_oracle(point, spec, cfg.run.feedback, res.report.i_bits());
    points.push_back(point);
    std::printf("[dicap] di = %.4f bits (se %.4f)\n", res.report.i_bits(),
                res.report.i_se_bits());
    if (res.diverged) {
      rec.status = "failed";
      rec.diagnostic = spec.name() + ": " + res.diagnostic;
    }
  }
  rec.metrics["points"] = points;
}

void dispatch_optimize(const ExperimentConfig& cfg, const fs::path& out,
                       RunRecord& rec) {
  std::vector<ChannelSpec> specs = channel_grid(cfg);
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t j = 0; j < specs.size(); ++j) {
    const ChannelSpec& spec = specs[j];
    PolicyGradConfig pcfg = to_policy_grad_config(cfg);
    pcfg.seed = point_seed(cfg, j);
    std::cout << "[dicap] optimize " << spec.name() << " feedback="
              << (cfg.run.feedback ? "true" : "false") << " estimator="
              << cfg.run.estimator << " (point " << j + 1 << "/"
              << specs.size() << ", iters " << pcfg.iters << ")\n";
    TrainDiResult res = train_di(spec, cfg.run.feedback, pcfg);

    std::string curve = artifact_path(out, "curve", ".csv", j, specs.size());
    write_curve_csv(curve, res.curve);
    rec.artifacts.push_back(curve);

    std::string model = artifact_path(out, "model", ".bin", j, specs.size());
    nlohmann::json point = report_json(res.report);
    if (res.mode == EstimatorMode::kDine) {
      NamedParams named = res.gen.named("gen");
      NamedParams dine = res.dine.named();
      named.insert(named.end(), dine.begin(), dine.end());
      save_model(model, named);
    } else {
      VecXd pmf = softmax_pmf(res.mine_logits);
      point["pmf"] = std::vector<double>(pmf.data(), pmf.data() + pmf.size());
      NamedParams named = res.mine.named();
      MatXd logits = res.mine_logits;
      named.push_back({"pmf_logits", &logits});
      save_model(model, named);
    }
    rec.artifacts.push_back(model);

    point["channel"] = spec.name();
    point["diverged"] = res.diverged;
    add_oracle(point, spec, cfg.run.feedback, res.report.i_bits());
    points.push_back(point);
    std::printf("[dicap] di = %.4f bits (se %.4f)\n", res.report.i_bits(),
                res.report.i_se_bits());
    if (res.diverged) {
      rec.status = "failed";
      rec.diagnostic = spec.name() + ": " + res.diagnostic;
    }
  }
  rec.metrics["points"] = points;
}

void dispatch_qgraph(const ExperimentConfig& cfg, const fs::path& out,
                     RunRecord& rec) {
  std::vector<ChannelSpec> specs = channel_grid(cfg);
  if (specs.size() != 1)
    throw std::invalid_argument(
        "config: channel: qgraph does not support parameter sweeps");
  const ChannelSpec& spec = specs[0];
  if (spec.state_card() < 2 || !spec.is_unifilar())
    throw std::invalid_argument(
        "config: channel.kind: qgraph needs a unifilar finite-state channel");
  if (cfg.run.estimator != "dine")
    throw std::invalid_argument(
        "config: run.estimator: qgraph uses the dine estimator");

  PolicyGradConfig pcfg = to_policy_grad_config(cfg);
  pcfg.seed = point_seed(cfg, 0);
  std::cout << "[dicap] qgraph " << spec.name() << " feedback="
            << (cfg.run.feedback ? "true" : "false") << ": training policy ("
            << pcfg.iters << " iters)\n";
  TrainDiResult res = train_di(spec, cfg.run.feedback, pcfg);
  std::string curve = (out / "curve.csv").string();
  write_curve_csv(curve, res.curve);
  rec.artifacts.push_back(curve);
  if (res.diverged) {
    rec.status = "failed";
    rec.diagnostic = res.diagnostic;
    rec.metrics["policy"] = report_json(res.report);
    return;
  }
  std::printf("[dicap] achieved rate = %.4f bits\n", res.report.i_bits());

  GeneratorPolicy policy(res.gen, 0.0);
  std::cout << "[dicap] training belief network ("
            << cfg.qgraph.qnet_iters << " iters)\n";
  QNetTrainResult qres =
      train_qnet(spec, policy, cfg.run.feedback, to_qnet_train_config(cfg));
  std::string qnet_curve = (out / "qnet_curve.csv").string();
  write_qnet_curve(qnet_curve, qres.loss_curve);
  rec.artifacts.push_back(qnet_curve);

  std::cout << "[dicap] extracting graph (n=" << cfg.qgraph.extract_n
            << ", k up to " << cfg.qgraph.k_max << ")\n";
  KSelection sel = select_qgraph_k(
      qres.qnet, spec, policy, cfg.run.feedback, cfg.qgraph.extract_n,
      cfg.qgraph.k_max, derive_seed(cfg.run.seed, 7003),
      cfg.qgraph.purity_min);
  std::printf("[dicap] selected k = %d (purity %.4f)\n", sel.k,
              sel.graph.purity);

  std::cout << "[dicap] maximizing the single-letter bound ("
            << cfg.qgraph.restarts << " restarts)\n";
  BoundResult bound = qgraph_bound(spec, sel.graph, to_qbound_config(cfg),
                                   res.report.i_bits());
  std::printf("[dicap] lb_proxy = %.4f bits, ub = %.4f bits (gap %.4f)\n",
              bound.lb_proxy_bits, bound.ub_bits,
              bound.ub_bits - bound.lb_proxy_bits);

  std::string gjson = (out / "qgraph.json").string();
  write_qgraph_json(gjson, sel.graph);
  rec.artifacts.push_back(gjson);
  std::string gdot = (out / "qgraph.dot").string();
  write_qgraph_dot(gdot, sel.graph);
  rec.artifacts.push_back(gdot);

  std::string model = (out / "model.bin").string();
  NamedParams named = res.gen.named("gen");
  NamedParams dine = res.dine.named();
  named.insert(named.end(), dine.begin(), dine.end());
  NamedParams qnet = qres.qnet.named("qnet");
  named.insert(named.end(), qnet.begin(), qnet.end());
  save_model(model, named);
  rec.artifacts.push_back(model);

  rec.metrics["policy"] = report_json(res.report);
  rec.metrics["channel"] = spec.name();
  rec.metrics["k"] = sel.k;
  rec.metrics["purity"] = sel.graph.purity;
  rec.metrics["qnet_final_ce_nats"] =
      qres.loss_curve.empty() ? 0.0 : qres.loss_curve.back();
  rec.metrics["lb_proxy_bits"] = bound.lb_proxy_bits;
  rec.metrics["ub_bits"] = bound.ub_bits;
  rec.metrics["gap_bits"] = bound.ub_bits - bound.lb_proxy_bits;
  add_oracle(rec.metrics, spec, cfg.run.feedback, res.report.i_bits());
}

void dispatch_shape(const ExperimentConfig& cfg, const fs::path& out,
                    RunRecord& rec) {
  Constellation c = config_constellation(cfg);
  std::cout << "[dicap] shape " << cfg.shaping.constellation << "-"
            << cfg.shaping.order << " over " << cfg.shaping.snr_db.size()
            << " SNR points (" << cfg.shaping.iters << " iters each)\n";
  std::vector<ShapingResult> results =
      run_shaping(c, std::span<const double>(cfg.shaping.snr_db),
                  to_shaping_config(cfg));

  std::string curve = (out / "curve.csv").string();
  write_shaping_csv(curve, c, results);
  rec.artifacts.push_back(curve);

  nlohmann::json points = nlohmann::json::array();
  std::vector<MatXd> pmf_store(results.size());
  NamedParams named;
  for (std::size_t j = 0; j < results.size(); ++j) {
    const ShapingResult& r = results[j];
    std::string pj = artifact_path(out, "pmf", ".json", j, results.size());
    write_text_atomic(pj, shaping_pmf_json(c, r) + "\n");
    rec.artifacts.push_back(pj);
    pmf_store[j] = r.pmf;
    named.push_back({"pmf_" + std::to_string(j), &pmf_store[j]});
    points.push_back({{"snr_db", r.snr_db},
                      {"sigma", r.sigma},
                      {"mi_mine_bits", r.mi_mine_bits},
                      {"mi_uniform_bits", r.mi_uniform_bits},
                      {"mi_learned_quadrature_bits", r.mi_learned_quad_bits}});
    std::printf(
        "[dicap] snr %+.1f dB: mine %.4f, uniform %.4f, learned %.4f bits\n",
        r.snr_db, r.mi_mine_bits, r.mi_uniform_bits, r.mi_learned_quad_bits);
  }
  std::string model = (out / "model.bin").string();
  save_model(model, named);
  rec.artifacts.push_back(model);
  rec.metrics["points"] = points;
}

void dispatch_oracle(const ExperimentConfig& cfg, const fs::path&,
                     RunRecord& rec) {
  std::vector<ChannelSpec> specs = channel_grid(cfg);
  nlohmann::json points = nlohmann::json::array();
  for (const ChannelSpec& spec : specs) {
    std::optional<double> cap = exact_capacity_oracle(spec, cfg.run.feedback);
    if (!cap)
      throw std::invalid_argument(
          "config: channel.kind: no closed-form capacity oracle for " +
          spec.name() +
          (cfg.run.feedback ? " with feedback" : " without feedback"));
    if (specs.size() == 1)
      std::printf("%.6f bits\n", *cap);
    else
      std::printf("%s: %.6f bits\n", spec.name().c_str(), *cap);
    points.push_back({{"channel", spec.name()}, {"capacity_bits", *cap}});
  }
  rec.metrics["points"] = points;
}

void dispatch_lemma2(const ExperimentConfig& cfg, const fs::path& out,
                     RunRecord& rec) {
  bool all_hold = true;
  std::string csv = "m,count,log_count_nats,log_bound_nats,holds\n";
  std::printf("%3s  %-14s  %-14s  %s\n", "m", "N_GP", "e^{m ln m}", "holds");
  for (int m = 1; m <= cfg.lemma2.m_max; ++m) {
    QGraphCount r = count_qgraphs(m, cfg.lemma2.y_card);
    all_hold = all_hold && r.bound_holds;
    std::printf("%3d  %-14.6g  %-14.6g  %s\n", m, r.count,
                std::exp(r.log_bound), r.bound_holds ? "true" : "false");
    char row[160];
    std::snprintf(row, sizeof row, "%d,%.17g,%.17g,%.17g,%s\n", m, r.count,
                  r.log_count, r.log_bound, r.bound_holds ? "true" : "false");
    csv += row;
  }
  std::string path = (out / "lemma2.csv").string();
  write_text_atomic(path, csv);
  rec.artifacts.push_back(path);
  rec.metrics["m_max"] = cfg.lemma2.m_max;
  rec.metrics["y_card"] = cfg.lemma2.y_card;
  rec.metrics["all_hold"] = all_hold;
}

}  // namespace

nlohmann::json RunRecord::to_json() const {
  return {{"command", command},     {"build_id", build_id},
          {"status", status},       {"diagnostic", diagnostic},
          {"wall_ms", wall_ms},     {"config", config},
          {"metrics", metrics},     {"artifacts", artifacts}};
}

int run_and_record(const ExperimentConfig& cfg) {
  if (cfg.run.command.empty())
    throw std::invalid_argument("config: run.command: no command given");
  RunRecord rec;
  rec.command = cfg.run.command;
  rec.build_id = build_id();
  rec.config = config_echo(cfg);
  fs::path out = cfg.run.out.empty() ? fs::path("runs") / cfg.run.command
                                     : fs::path(cfg.run.out);
  fs::create_directories(out);
  auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.run.command == "estimate") dispatch_estimate(cfg, out, rec);
    else if (cfg.run.command == "optimize") dispatch_optimize(cfg, out, rec);
    else if (cfg.run.command == "qgraph") dispatch_qgraph(cfg, out, rec);
    else if (cfg.run.command == "shape") dispatch_shape(cfg, out, rec);
    else if (cfg.run.command == "oracle") dispatch_oracle(cfg, out, rec);
    else dispatch_lemma2(cfg, out, rec);
  } catch (const std::invalid_argument&) {
    throw;  // configuration error: nonzero exit, no record
  } catch (const std::exception& e) {
    rec.status = "failed";
    rec.diagnostic = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  std::string summary = (out / "summary.json").string();
  write_text_atomic(summary, rec.to_json().dump(2) + "\n");
  if (rec.status != "complete") {
    std::cerr << "[dicap] run failed: " << rec.diagnostic << "\n";
    return 1;
  }
  std::cout << "[dicap] wrote " << summary << "\n";
  return 0;
}

}  // namespace dicap
