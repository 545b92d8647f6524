#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "headprune/experiment.hpp"

namespace headprune::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path cell_dir(const fs::path& out, defense::Strategy s, data::TriggerKind attack, std::uint64_t seed) {
  return out / std::string(defense::to_string(s)) / std::string(data::to_string(attack)) /
         ("seed" + std::to_string(seed));
}

defense::DefenseConfig defense_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  defense::DefenseConfig d = cfg.defense;
  d.seed = seed;
  return d;
}

model::TrainConfig defender_train_config(const ExperimentConfig& cfg, std::uint64_t seed) {
  model::TrainConfig t = cfg.train;
  t.seed = seed;
  return t;
}

Prepared prepare(const ExperimentConfig& cfg, data::TriggerKind attack, std::uint64_t seed) {
  Prepared p;
  p.attack = attack;
  p.seed = seed;
  data::CorpusConfig cc;
  cc.max_seq_len = cfg.model.max_seq_len;
  const data::Dataset corpus = data::generate_corpus(seed, cfg.corpus_size, cc);
  p.split = data::split_dataset(corpus, cfg.splits, seed);
  const data::TriggerSpec spec = data::TriggerSpec::make(attack, cfg.target_label, cfg.model.max_seq_len);
  p.poisoned = data::poison_dataset(p.split.train, cfg.poison_rate, spec, seed);
  p.attack_set = data::make_attack_testset(p.split.test, spec);

  p.mp = model::EncoderModel::init(cfg.model, seed);
  model::TrainConfig atc;
  atc.epochs = cfg.attacker_epochs;
  atc.batch_size = cfg.train.batch_size;
  atc.learning_rate = cfg.attacker_learning_rate;
  atc.seed = mix_seed(seed, 0xa77ac);
  model::fine_tune(p.mp, p.poisoned, p.split.val, atc);
  return p;
}

namespace {

eval::EvalReport evaluate(const defense::Outcome& o, const Prepared& p, defense::Strategy s) {
  const eval::BatchPredictor pred = eval::predictor_for(o);
  return eval::make_report(std::string(defense::to_string(s)), std::string(data::to_string(p.attack)), p.seed,
                           eval::clean_accuracy(pred, p.split.test), eval::label_flip_rate(pred, p.attack_set));
}

// Snapshot that re-runs exactly this cell.
json cell_config(const ExperimentConfig& cfg, defense::Strategy s, data::TriggerKind attack, std::uint64_t seed) {
  ExperimentConfig c = cfg;
  c.strategies = {s};
  c.attacks = {attack};
  c.seeds = {seed};
  c.output_dir.clear();
  return to_json(c);
}

json trace_document(const defense::Outcome& o) {
  if (o.traces.size() == 1) return defense::to_json(o.traces.front());
  json members = json::array();
  for (const defense::PruneTrace& t : o.traces) members.push_back(defense::to_json(t));
  return json{{"members", members}};
}

// Runs f(i) for i in [0, n) on up to jobs threads; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex lock;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> g(lock);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (std::thread& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

struct Unit {
  data::TriggerKind attack;
  std::uint64_t seed;
};

std::vector<Unit> units(const ExperimentConfig& cfg) {
  std::vector<Unit> out;
  for (data::TriggerKind a : cfg.attacks)
    for (std::uint64_t s : cfg.seeds) out.push_back({a, s});
  return out;
}

std::string report_json(const CellResult& r) {
  json j = eval::to_json(r.defended);
  j["heads_pruned"] = r.heads_pruned;
  j["ft"] = eval::to_json(r.ft);
  return j.dump(2) + "\n";
}

}  // namespace

std::vector<CellResult> run(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  cfg.validate();
  const std::vector<Unit> work = units(cfg);
  for (defense::Strategy s : cfg.strategies)
    for (const Unit& u : work) fs::create_directories(cell_dir(out, s, u.attack, u.seed));

  std::vector<std::vector<CellResult>> results(work.size());
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const Unit& u = work[i];
    const Prepared p = prepare(cfg, u.attack, u.seed);
    const defense::DefenseConfig dc = defense_config(cfg, u.seed);
    const model::TrainConfig tc = defender_train_config(cfg, u.seed);
    const defense::Outcome ft = defense::run_strategy(defense::Strategy::ft, p.mp, p.split.train, p.split.val, dc, tc);
    const eval::EvalReport ft_report = evaluate(ft, p, defense::Strategy::ft);

    for (defense::Strategy s : cfg.strategies) {
      const fs::path dir = cell_dir(out, s, u.attack, u.seed);
      const defense::Outcome o =
          s == defense::Strategy::ft ? ft : defense::run_strategy(s, p.mp, p.split.train, p.split.val, dc, tc);
      CellResult r{evaluate(o, p, s), ft_report, o.heads_pruned()};
      write_text(dir / "config.json", cell_config(cfg, s, u.attack, u.seed).dump(2) + "\n");
      model::save_checkpoint(p.mp, dir / "mp.ckpt");
      model::save_checkpoint(o.models.front(), dir / "defended.ckpt");
      if (o.models.size() > 1)
        for (std::size_t k = 0; k < o.models.size(); ++k)
          model::save_checkpoint(o.models[k], dir / ("member" + std::to_string(k) + ".ckpt"));
      write_text(dir / "trace.json", trace_document(o).dump(2) + "\n");
      data::save_jsonl(p.split.test, dir / "test.jsonl");
      data::save_jsonl(p.attack_set, dir / "attack.jsonl");
      write_text(dir / "report.json", report_json(r));
      results[i].push_back(std::move(r));
    }
  });

  std::vector<CellResult> flat;
  std::vector<eval::EvalReport> table;
  const bool has_ft =
      std::find(cfg.strategies.begin(), cfg.strategies.end(), defense::Strategy::ft) != cfg.strategies.end();
  for (const auto& group : results)
    for (const CellResult& r : group) {
      flat.push_back(r);
      table.push_back(r.defended);
    }
  // The FT reference makes every table self-contained.
  if (!has_ft)
    for (const auto& group : results) table.push_back(group.front().ft);
  write_text(out / "report.csv", eval::report_table(table, eval::Format::csv));
  write_text(out / "report.txt", eval::report_table(table, eval::Format::text));
  return flat;
}

void sweep(const ExperimentConfig& cfg, const fs::path& out, std::size_t jobs) {
  cfg.validate();
  const std::vector<Unit> work = units(cfg);
  std::vector<std::vector<std::pair<defense::Strategy, eval::SweepResult>>> results(work.size());
  parallel_for(work.size(), jobs, [&](std::size_t i) {
    const Unit& u = work[i];
    const Prepared p = prepare(cfg, u.attack, u.seed);
    const eval::SweepData sd{p.split.train, p.split.val, p.split.test, p.attack_set};
    for (defense::Strategy s : cfg.strategies) {
      eval::SweepResult r = eval::tau_sweep(s, p.mp, sd, cfg.taus, defense_config(cfg, u.seed),
                                            defender_train_config(cfg, u.seed));
      const fs::path dir = cell_dir(out, s, u.attack, u.seed);
      write_text(dir / "sweep.csv", eval::sweep_to_csv(r));
      write_text(dir / "config.json", cell_config(cfg, s, u.attack, u.seed).dump(2) + "\n");
      results[i].emplace_back(s, std::move(r));
    }
  });
  std::string csv = "strategy,attack,seed,tau,acc,lfr,heads_pruned\n";
  char buf[160];
  for (defense::Strategy s : cfg.strategies)
    for (std::size_t i = 0; i < work.size(); ++i)
      for (const auto& [strategy, r] : results[i]) {
        if (strategy != s) continue;
        for (const eval::SweepRow& row : r.rows) {
          std::snprintf(buf, sizeof buf, ",%llu,%.17g,%.17g,%.17g,%zu\n",
                        static_cast<unsigned long long>(work[i].seed), row.tau, row.acc, row.lfr, row.heads_pruned);
          csv += std::string(defense::to_string(s)) + "," + std::string(data::to_string(work[i].attack)) + buf;
        }
      }
  write_text(out / "sweep.csv", csv);
}

std::vector<eval::EvalReport> collect_reports(const std::vector<fs::path>& dirs) {
  std::vector<eval::EvalReport> out;
  std::vector<std::string> missing;
  for (const fs::path& dir : dirs) {
    std::vector<fs::path> found;
    if (fs::is_regular_file(dir / "report.json")) found.push_back(dir / "report.json");
    else if (fs::is_directory(dir))
      for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "report.json") found.push_back(e.path());
    if (found.empty()) {
      missing.push_back(dir.string());
      continue;
    }
    std::sort(found.begin(), found.end());
    for (const fs::path& f : found) {
      try {
        out.push_back(eval::report_from_json(json::parse(read_text(f))));
      } catch (const std::exception& e) {
        throw std::runtime_error("bad report '" + f.string() + "': " + e.what());
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "no report.json under:";
    for (const std::string& m : missing) msg += " " + m;
    throw std::runtime_error(msg);
  }
  return out;
}

}  // namespace headprune::experiment
