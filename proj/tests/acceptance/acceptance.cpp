// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,5] [--expect-fail 3,4] [--workdir DIR]
//
// Exit status is 0 when every failing criterion was listed in
// --expect-fail. Expected failures still print FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "headprune/experiment.hpp"
#include "headprune/kernels.hpp"

namespace fs = std::filesystem;
using namespace headprune;
using defense::Strategy;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::set<int> parse_ids(const std::string& text) {
  std::set<int> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.insert(std::stoi(item));
  return out;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

bool same_parameters(const model::EncoderModel& a, const model::EncoderModel& b) {
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!bit_equal(pa[i]->value.data, pb[i]->value.data)) return false;
  return a.head_mask() == b.head_mask();
}

std::string fmt(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// The demo experiment: L=2, H=4, d=32, n=2000, poison 0.2.
experiment::ExperimentConfig demo(data::TriggerKind attack, std::vector<Strategy> strategies,
                                  std::vector<std::uint64_t> seeds) {
  experiment::ExperimentConfig c;
  c.attacks = {attack};
  c.strategies = std::move(strategies);
  c.seeds = std::move(seeds);
  return c;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Trace documents of every cell under a run directory.
std::vector<std::pair<fs::path, defense::PruneTrace>> load_traces(const fs::path& root) {
  std::vector<std::pair<fs::path, defense::PruneTrace>> out;
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file() && e.path().filename() == "trace.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const fs::path& f : files) {
    const nlohmann::json j = nlohmann::json::parse(experiment::read_text(f));
    if (j.contains("members"))
      for (const auto& m : j.at("members")) out.emplace_back(f, defense::trace_from_json(m));
    else
      out.emplace_back(f, defense::trace_from_json(j));
  }
  return out;
}

class Suite {
 public:
  Suite(fs::path workdir) : work_(std::move(workdir)) {}

  // --- 1 -------------------------------------------------------------------
  Outcome gradient_oracle() {
    const auto t0 = Clock::now();
    model::EncoderModel m = model::EncoderModel::init(model::ModelConfig{}, 1);
    const model::TokenBatch batch = model::make_batch(data::generate_corpus(1, 4));
    std::vector<ad::Parameter*> params = m.parameters();
    const ad::GradCheckReport r = ad::grad_check(params, [&](ad::Tape& tape) {
      return ad::cross_entropy(m.forward(tape, batch, ad::Mode::eval, nullptr, true), batch.labels);
    });
    const double s = seconds_since(t0);
    std::ostringstream d;
    d << r.checked << " entries, worst rel " << r.worst_rel_error << " at " << r.worst_parameter << "["
      << r.worst_index << "], " << fmt(s, 1) << "s";
    return {r.passed && r.worst_rel_error <= 1e-5 && s < 60.0, d.str()};
  }

  // --- 2 -------------------------------------------------------------------
  Outcome implantation() {
    const auto t0 = Clock::now();
    const auto cells = experiment::run(demo(data::TriggerKind::rare_token, {Strategy::ft}, {1, 2, 3}), work_ / "c2");
    std::vector<double> acc, lfr;
    std::ostringstream d;
    for (const auto& c : cells) {
      acc.push_back(c.ft.acc);
      lfr.push_back(c.ft.lfr);
      d << "seed " << c.ft.seed << " acc " << fmt(c.ft.acc) << " lfr " << fmt(c.ft.lfr) << "; ";
    }
    const double s = seconds_since(t0);
    d << "mean acc " << fmt(mean_of(acc)) << " lfr " << fmt(mean_of(lfr)) << ", " << fmt(s, 1) << "s";
    return {mean_of(acc) >= 0.90 && mean_of(lfr) >= 0.80 && s < 600.0, d.str()};
  }

  // --- 3 -------------------------------------------------------------------
  Outcome syntactic_efficacy() {
    const auto t0 = Clock::now();
    const auto cells =
        experiment::run(demo(data::TriggerKind::syntactic, {Strategy::gradient_prune}, {1, 2, 3, 4, 5}), work_ / "c3");
    std::vector<double> ft_lfr, lfr, acc;
    std::ostringstream d;
    for (const auto& c : cells) {
      ft_lfr.push_back(c.ft.lfr);
      lfr.push_back(c.defended.lfr);
      acc.push_back(c.defended.acc);
      d << "seed " << c.defended.seed << " FT lfr " << fmt(c.ft.lfr) << " -> " << fmt(c.defended.lfr) << " acc "
        << fmt(c.defended.acc) << " heads " << c.heads_pruned << "; ";
    }
    const double reduction = mean_of(ft_lfr) - mean_of(lfr);
    const double s = seconds_since(t0);
    d << "mean reduction " << fmt(reduction) << ", mean acc " << fmt(mean_of(acc)) << ", " << fmt(s, 1) << "s";
    return {reduction >= 0.30 && mean_of(acc) >= 0.85 && s < 1800.0, d.str()};
  }

  // --- 4 -------------------------------------------------------------------
  Outcome style_ordering() {
    const auto t0 = Clock::now();
    const auto cells = experiment::run(
        demo(data::TriggerKind::style, {Strategy::rl_prune, Strategy::layerwise_prune}, {1, 2, 3, 4, 5}), work_ / "c4");
    std::vector<double> rl, lw;
    for (const auto& c : cells) (c.defended.strategy == "rl_prune" ? rl : lw).push_back(c.defended.lfr);
    std::cout << experiment::read_text(work_ / "c4" / "report.txt");
    const double s = seconds_since(t0);
    std::ostringstream d;
    d << "mean LFR rl_prune " << fmt(mean_of(rl)) << " vs layerwise_prune " << fmt(mean_of(lw)) << ", " << fmt(s, 1)
      << "s";
    return {rl.size() == 5 && lw.size() == 5 && mean_of(rl) <= mean_of(lw) && s < 2700.0, d.str()};
  }

  // --- 5 -------------------------------------------------------------------
  Outcome trace_suite() {
    // Every pruning strategy on one demo cell, plus whatever earlier
    // criteria left on disk.
    const std::vector<Strategy> all = {Strategy::gradient_prune,     Strategy::layerwise_prune,
                                       Strategy::sparsify_then_prune, Strategy::randomized_ensemble,
                                       Strategy::rl_prune,           Strategy::bayesian_prune};
    experiment::run(demo(data::TriggerKind::rare_token, all, {1}), work_ / "c5");

    std::vector<std::pair<fs::path, defense::PruneTrace>> traces;
    for (const char* sub : {"c3", "c4", "c5", "c10a"})
      if (fs::exists(work_ / sub))
        for (auto& t : load_traces(work_ / sub)) traces.push_back(std::move(t));

    const model::ModelConfig mc;
    const std::size_t L = mc.num_layers, H = mc.heads_per_layer;
    std::vector<std::string> problems;
    std::vector<std::pair<fs::path, const defense::PruneTrace*>> reeval;
    const auto t0 = Clock::now();
    for (const auto& [path, t] : traces) {
      const std::string where = fs::relative(path, work_).string() + ": ";
      for (const std::string& p : defense::check_trace(t, L, H)) problems.push_back(where + p);
      // Nested: every kept step is contained in the final headset.
      std::size_t backtracks = 0;
      for (const defense::PruneStep& s : t.steps) {
        if (s.backtracked) {
          ++backtracks;
          continue;
        }
        for (const model::HeadId& id : s.heads)
          if (!t.final_headset.count(id)) problems.push_back(where + "kept step not in final headset");
      }
      if (backtracks > 1) problems.push_back(where + "more than one backtrack");
      // Survivor cap.
      std::vector<std::size_t> per_layer(L, 0);
      for (const model::HeadId& id : t.final_headset) ++per_layer[id.layer];
      for (std::size_t n : per_layer)
        if (n >= H) problems.push_back(where + "layer emptied");
      if (t.strategy == "randomized_ensemble") {
        const double p = t.config.at("ensemble_prune_fraction").get<double>();
        const auto cap = std::min(static_cast<std::size_t>(std::floor(p * L * H + 1e-9)), L * (H - 1));
        if (t.final_headset.size() > cap) problems.push_back(where + "ensemble member exceeds its head budget");
      }
      const bool ordered = t.strategy == "gradient_prune" || t.strategy == "sparsify_then_prune" ||
                           t.strategy == "bayesian_prune" || t.strategy == "rl_prune";
      if (ordered && !t.steps.empty() && t.steps.back().backtracked) reeval.emplace_back(path, &t);
      if (ordered) {
        const double tau = t.config.at("tau").get<double>();
        for (const defense::PruneStep& s : t.steps)
          if (!s.backtracked && s.val_accuracy < tau) problems.push_back(where + "kept step below tau");
      }
    }
    const double check_s = seconds_since(t0);

    // Post-backtrack accuracy, re-evaluated on the reconstructed scored model.
    std::map<std::string, model::EncoderModel> scored;
    for (const auto& [path, t] : reeval) {
      const experiment::ExperimentConfig cfg = experiment::load_config(path.parent_path() / "config.json");
      const std::uint64_t seed = cfg.seeds.front();
      const experiment::Prepared p = experiment::prepare(cfg, cfg.attacks.front(), seed);
      model::TrainConfig tc = experiment::defender_train_config(cfg, seed);
      if (t->strategy == "sparsify_then_prune") tc.sparsity = model::SparsityRegularization{cfg.defense.l1, cfg.defense.l2};
      model::EncoderModel fp = p.mp;
      model::fine_tune(fp, p.split.train, p.split.val, tc);
      model::apply_head_mask(fp, t->final_headset);
      const double acc = model::accuracy(fp, p.split.val);
      const double tau = t->config.at("tau").get<double>();
      if (acc < tau)
        problems.push_back(fs::relative(path, work_).string() + ": re-evaluated accuracy " + fmt(acc) + " below tau");
    }

    std::ostringstream d;
    d << traces.size() << " traces, " << reeval.size() << " backtracks re-evaluated, checks " << fmt(check_s * 1e3, 2)
      << " ms";
    for (const std::string& p : problems) d << "\n    " << p;
    return {!traces.empty() && problems.empty() && check_s < 1.0, d.str()};
  }

  // --- 6 -------------------------------------------------------------------
  Outcome tau_monotonicity() {
    const double taus[] = {0.80, 0.85, 0.90, 0.95};
    std::ostringstream d;
    bool ok = true;
    for (data::TriggerKind attack : {data::TriggerKind::rare_token, data::TriggerKind::syntactic}) {
      const experiment::ExperimentConfig cfg = demo(attack, {Strategy::gradient_prune}, {1});
      const experiment::Prepared p = experiment::prepare(cfg, attack, 1);
      const model::TrainConfig tc = experiment::defender_train_config(cfg, 1);
      const defense::DefenseConfig dc = experiment::defense_config(cfg, 1);
      // Frozen scores: one f_p, one ordering, s = 1.
      model::EncoderModel fp = p.mp;
      model::fine_tune(fp, p.split.train, p.split.val, tc);
      const auto order = scoring::ascending_order(scoring::gradient_importance(fp, p.split.train, dc.score_batch_size));
      std::vector<std::size_t> heads;
      for (double tau : taus)
        heads.push_back(defense::prune_with_backtracking(fp, p.split.val, order, tau, 1).final_headset.size());
      const bool mono = std::is_sorted(heads.rbegin(), heads.rend());
      ok = ok && mono;
      d << data::to_string(attack) << " heads";
      for (std::size_t h : heads) d << " " << h;
      d << "; ";

      // The end-to-end sweep, round-tripped through CSV.
      const eval::SweepData sd{p.split.train, p.split.val, p.split.test, p.attack_set};
      const eval::SweepResult sweep = eval::tau_sweep(Strategy::gradient_prune, p.mp, sd, taus, dc, tc);
      const bool round_trip = eval::sweep_from_csv(eval::sweep_to_csv(sweep)) == sweep;
      ok = ok && round_trip && sweep.monotone();
      d << "sweep heads";
      for (const auto& r : sweep.rows) d << " " << r.heads_pruned;
      d << (round_trip ? " (csv ok); " : " (csv MISMATCH); ");
    }
    return {ok, d.str()};
  }

  // --- 7 -------------------------------------------------------------------
  Outcome degeneracies() {
    const experiment::ExperimentConfig cfg = demo(data::TriggerKind::rare_token, {Strategy::gradient_prune}, {2});
    const experiment::Prepared p = experiment::prepare(cfg, data::TriggerKind::rare_token, 2);
    const model::TrainConfig tc = experiment::defender_train_config(cfg, 2);
    defense::DefenseConfig dc = experiment::defense_config(cfg, 2);
    std::ostringstream d;

    defense::DefenseConfig zero = dc;
    zero.l1 = zero.l2 = 0.0;
    const auto g = defense::gradient_prune(p.mp, p.split.train, p.split.val, zero, tc);
    const auto sp = defense::sparsify_then_prune(p.mp, p.split.train, p.split.val, zero, tc);
    const bool sparsify_ok = same_parameters(g.model, sp.model) && g.trace.steps == sp.trace.steps &&
                             g.trace.final_headset == sp.trace.final_headset;
    d << "sparsify(0,0)==gradient " << (sparsify_ok ? "yes" : "NO") << " (" << g.trace.final_headset.size()
      << " heads); ";

    defense::DefenseConfig greedy = dc;
    greedy.epsilon = 0.0;
    const auto rl = defense::rl_prune(p.mp, p.split.train, p.split.val, greedy, tc);
    model::EncoderModel fp = p.mp;
    model::fine_tune(fp, p.split.train, p.split.val, tc);
    model::HeadMask mask(fp.config().num_layers, fp.config().heads_per_layer);
    std::vector<model::HeadId> order;
    for (const model::HeadId& id : scoring::ascending_order(scoring::activation_variance(fp, p.split.val))) {
      if (mask.active_in_layer(id.layer) < 2) continue;
      mask.set(id, false);
      order.push_back(id);
    }
    bool rl_ok = rl.trace.steps.size() <= order.size();
    for (std::size_t i = 0; rl_ok && i < rl.trace.steps.size(); ++i)
      rl_ok = rl.trace.steps[i].heads == std::vector<model::HeadId>{order[i]};
    d << "rl(eps=0) greedy " << (rl_ok ? "yes" : "NO") << " (" << rl.trace.steps.size() << " steps); ";

    scoring::McOptions one;
    one.passes = 1;
    const auto t1 = scoring::mc_dropout_uncertainty(p.mp, p.split.val, one);
    model::ModelConfig quiet = p.mp.config();
    quiet.dropout_rate = 0.0;
    model::EncoderModel no_dropout = model::EncoderModel::init(quiet, 2);
    const auto src = p.mp.parameters();
    const auto dst = no_dropout.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
    scoring::McOptions eight;
    const auto t0 = scoring::mc_dropout_uncertainty(no_dropout, p.split.val, eight);
    auto all_zero = [](const scoring::ImportanceTable& t) {
      return std::all_of(t.scores.begin(), t.scores.end(), [](double v) { return v == 0.0; });
    };
    const bool mc_ok = all_zero(t1) && all_zero(t0);
    d << "mc zero tables " << (mc_ok ? "yes" : "NO") << "; ";

    defense::DefenseConfig single = dc;
    single.ensemble_size = 1;
    single.ensemble_prune_fraction = 0.0;
    const auto e = defense::randomized_ensemble(p.mp, p.split.train, p.split.val, single, tc);
    const auto ft = defense::baseline(p.mp, p.split.train, p.split.val, Strategy::ft, dc, tc);
    const bool ens_ok = e.ensemble.size() == 1 && same_parameters(e.ensemble.members().front(), ft.model) &&
                        bit_equal(e.ensemble.logits(p.split.test), ft.model.forward(model::make_batch(p.split.test)).logits.data);
    d << "ensemble(K=1,p=0)==FT " << (ens_ok ? "yes" : "NO");
    return {sparsify_ok && rl_ok && mc_ok && ens_ok, d.str()};
  }

  // --- 8 -------------------------------------------------------------------
  Outcome metric_oracles() {
    const data::Dataset fixture = data::generate_corpus(8, 20);
    // Correct except at seven fixed positions.
    std::vector<int> pred;
    for (const data::Example& e : fixture) pred.push_back(e.label);
    for (std::size_t i : {0, 3, 4, 9, 11, 14, 17}) pred[i] ^= 1;
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < fixture.size(); ++i) {
      const int y = fixture[i].label, q = pred[i];
      tp += y == 1 && q == 1;
      tn += y == 0 && q == 0;
      fp += y == 0 && q == 1;
      fn += y == 1 && q == 0;
    }
    const eval::BatchPredictor fixed = [&](std::span<const data::Example>) { return pred; };
    const eval::Rate acc = eval::clean_accuracy(fixed, fixture);
    const bool acc_ok = acc.hits == tp + tn && acc.total == 20 && acc.value == static_cast<double>(tp + tn) / 20.0;

    // Attack fixture: the triggered negatives of the same 20 examples.
    const data::Dataset attack =
        data::make_attack_testset(fixture, data::TriggerSpec::make(data::TriggerKind::rare_token));
    std::vector<int> attack_pred(attack.size());
    std::size_t flips = 0;
    for (std::size_t i = 0; i < attack.size(); ++i) {
      attack_pred[i] = pred[i] ^ 1;
      flips += attack_pred[i] == attack[i].label;
    }
    const eval::BatchPredictor attack_fixed = [&](std::span<const data::Example>) { return attack_pred; };
    const eval::Rate lfr = eval::label_flip_rate(attack_fixed, attack);
    const bool lfr_ok = lfr.hits == flips && lfr.total == attack.size() &&
                        lfr.value == static_cast<double>(flips) / static_cast<double>(attack.size());

    const eval::BatchPredictor ignores = [](std::span<const data::Example> xs) {
      std::vector<int> out;
      for (const data::Example& e : xs) out.push_back(e.original_label);
      return out;
    };
    const eval::BatchPredictor target = [](std::span<const data::Example> xs) {
      return std::vector<int>(xs.size(), data::kPositive);
    };
    const double lfr_ignore = eval::label_flip_rate(ignores, attack).value;
    const double lfr_target = eval::label_flip_rate(target, attack).value;
    std::ostringstream d;
    d << "confusion tp " << tp << " tn " << tn << " fp " << fp << " fn " << fn << ", acc " << acc.value << "; lfr "
      << lfr.hits << "/" << lfr.total << "; ignoring stub " << lfr_ignore << ", constant-target stub " << lfr_target;
    return {acc_ok && lfr_ok && lfr_ignore == 0.0 && lfr_target == 1.0, d.str()};
  }

  // --- 9 -------------------------------------------------------------------
  Outcome mask_zero() {
    const experiment::ExperimentConfig cfg = demo(data::TriggerKind::rare_token, {Strategy::ft}, {3});
    const experiment::Prepared p = experiment::prepare(cfg, data::TriggerKind::rare_token, 3);
    const std::size_t L = p.mp.config().num_layers, H = p.mp.config().heads_per_layer;
    const std::size_t d = p.mp.config().model_dim, dh = p.mp.config().head_dim();
    Rng rng(mix_seed(9, 9));
    std::size_t equal = 0;
    for (int b = 0; b < 10; ++b) {
      data::Dataset batch;
      for (int i = 0; i < 16; ++i) batch.push_back(p.poisoned[uniform_index(rng, p.poisoned.size())]);
      const model::HeadId id{uniform_index(rng, L), uniform_index(rng, H)};
      model::EncoderModel masked = p.mp, zeroed = p.mp;
      model::apply_head_mask(masked, {id});
      for (std::size_t r = id.head * dh; r < (id.head + 1) * dh; ++r)
        for (std::size_t c = 0; c < d; ++c) zeroed.layer(id.layer).wo.value.data[r * d + c] = 0.0;
      const model::TokenBatch tb = model::make_batch(batch);
      equal += bit_equal(masked.forward(tb).logits.data, zeroed.forward(tb).logits.data);
    }
    return {equal == 10, std::to_string(equal) + "/10 batches bit-identical"};
  }

  // --- 10 ------------------------------------------------------------------
  Outcome determinism() {
    const experiment::ExperimentConfig cfg = demo(data::TriggerKind::rare_token, {Strategy::gradient_prune}, {1});
    experiment::run(cfg, work_ / "c10a");
    experiment::run(cfg, work_ / "c10b");
    const fs::path cell = experiment::cell_dir({}, Strategy::gradient_prune, data::TriggerKind::rare_token, 1);
    const bool report = experiment::read_text(work_ / "c10a" / "report.csv") ==
                        experiment::read_text(work_ / "c10b" / "report.csv");
    const bool trace = experiment::read_text(work_ / "c10a" / cell / "trace.json") ==
                       experiment::read_text(work_ / "c10b" / cell / "trace.json");
    return {report && trace, std::string("report.csv ") + (report ? "identical" : "DIFFERS") + ", trace.json " +
                                 (trace ? "identical" : "DIFFERS")};
  }

 private:
  fs::path work_;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only, expect_fail;
  fs::path workdir = fs::temp_directory_path() / "headprune_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = parse_ids(argv[++i]);
    else if (a == "--expect-fail" && i + 1 < argc) expect_fail = parse_ids(argv[++i]);
    else if (a == "--workdir" && i + 1 < argc) workdir = argv[++i];
    else {
      std::cerr << "usage: acceptance [--only 1,2] [--expect-fail 3,4] [--workdir DIR]\n";
      return 2;
    }
  }
  fs::remove_all(workdir);
  fs::create_directories(workdir);
  std::cout << "simd: " << kernels::isa_name(kernels::active_isa()) << "\n";

  Suite suite(workdir);
  // Criterion 10 runs before 5 so its traces join the trace suite.
  const std::vector<std::pair<int, std::pair<const char*, std::function<Outcome()>>>> plan = {
      {1, {"gradient oracle", [&] { return suite.gradient_oracle(); }}},
      {2, {"backdoor implantation", [&] { return suite.implantation(); }}},
      {3, {"syntactic: gradient_prune LFR reduction", [&] { return suite.syntactic_efficacy(); }}},
      {4, {"style: LFR(rl_prune) <= LFR(layerwise_prune)", [&] { return suite.style_ordering(); }}},
      {10, {"end-to-end determinism", [&] { return suite.determinism(); }}},
      {5, {"trace suite", [&] { return suite.trace_suite(); }}},
      {6, {"tau monotonicity and sweep round trip", [&] { return suite.tau_monotonicity(); }}},
      {7, {"strategy degeneracies", [&] { return suite.degeneracies(); }}},
      {8, {"metric oracles", [&] { return suite.metric_oracles(); }}},
      {9, {"mask/zero equivalence", [&] { return suite.mask_zero(); }}},
  };

  std::map<int, bool> results;
  for (const auto& [id, entry] : plan) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = entry.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    results[id] = o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << entry.first << " [" << fmt(seconds_since(t0), 1)
              << "s] " << o.detail << std::endl;
  }

  int unexpected = 0;
  std::cout << "summary:";
  for (const auto& [id, pass] : results) std::cout << " " << id << (pass ? "=PASS" : "=FAIL");
  std::cout << "\n";
  for (const auto& [id, pass] : results) {
    if (!pass && !expect_fail.count(id)) {
      std::cout << "unexpected failure: criterion " << id << "\n";
      ++unexpected;
    }
    if (pass && expect_fail.count(id)) std::cout << "note: criterion " << id << " listed as expected failure but passed\n";
    if (!pass && expect_fail.count(id)) std::cout << "known failure: criterion " << id << "\n";
  }
  return unexpected == 0 ? 0 : 1;
}
