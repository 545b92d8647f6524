#include <charconv>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "headprune/eval.hpp"

namespace headprune::eval {

bool SweepResult::monotone() const {
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].heads_pruned > rows[i - 1].heads_pruned) return false;
  return true;
}

void validate_taus(std::span<const double> taus) {
  if (taus.empty()) throw std::invalid_argument("tau list is empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] <= 1.0)) throw std::invalid_argument("tau values must lie in (0,1]");
    if (i > 0 && !(taus[i] > taus[i - 1]))
      throw std::invalid_argument("tau values must be strictly increasing without duplicates");
  }
}

SweepResult tau_sweep(defense::Strategy strategy, const model::EncoderModel& mp, const SweepData& data,
                      std::span<const double> taus, const defense::DefenseConfig& cfg,
                      const model::TrainConfig& train_cfg) {
  validate_taus(taus);
  SweepResult out;
  for (double tau : taus) {
    defense::DefenseConfig c = cfg;
    c.tau = tau;
    const defense::Outcome o = defense::run_strategy(strategy, mp, data.train, data.val, c, train_cfg);
    const BatchPredictor p = predictor_for(o);
    out.rows.push_back({tau, clean_accuracy(p, data.test).value, label_flip_rate(p, data.attack).value,
                        o.heads_pruned()});
  }
  return out;
}

std::string sweep_to_csv(const SweepResult& sweep) {
  std::string out = "tau,acc,lfr,heads_pruned\n";
  char buf[128];
  for (const SweepRow& r : sweep.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%zu\n", r.tau, r.acc, r.lfr, r.heads_pruned);
    out += buf;
  }
  return out;
}

namespace {

template <typename T>
T parse_field(const std::string& s, std::size_t line) {
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size())
    throw std::invalid_argument("sweep csv line " + std::to_string(line) + ": bad field '" + s + "'");
  return v;
}

}  // namespace

SweepResult sweep_from_csv(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line) || line != "tau,acc,lfr,heads_pruned")
    throw std::invalid_argument("sweep csv: missing header");
  SweepResult out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 4) throw std::invalid_argument("sweep csv line " + std::to_string(n) + ": expected 4 fields");
    out.rows.push_back({parse_field<double>(f[0], n), parse_field<double>(f[1], n), parse_field<double>(f[2], n),
                        parse_field<std::size_t>(f[3], n)});
  }
  return out;
}

}  // namespace headprune::eval
