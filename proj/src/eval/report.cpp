#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

#include "headprune/eval.hpp"

namespace headprune::eval {

Format format_from_string(std::string_view name) {
  if (name == "csv") return Format::csv;
  if (name == "json") return Format::json;
  if (name == "text") return Format::text;
  throw std::invalid_argument("unknown format '" + std::string(name) + "' (expected csv, json or text)");
}

namespace {

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

std::string fmt(const char* spec, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, a);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<TableRow> aggregate(std::span<const EvalReport> reports, bool group_by_attack) {
  if (reports.empty()) throw std::invalid_argument("report_table: no reports");
  if (!group_by_attack) {
    std::set<std::string> attacks;
    for (const EvalReport& r : reports) attacks.insert(r.attack);
    if (attacks.size() > 1)
      throw std::invalid_argument("report_table: reports mix attack kinds but no group key was given");
  }
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const EvalReport& r : reports) {
    auto& cell = cells[{r.strategy, r.attack}];
    cell.first.push_back(r.acc);
    cell.second.push_back(r.lfr);
  }
  std::vector<TableRow> rows;
  for (const auto& [key, cell] : cells) {
    TableRow row;
    row.strategy = key.first;
    row.attack = key.second;
    mean_std(cell.first, row.acc_mean, row.acc_std);
    mean_std(cell.second, row.lfr_mean, row.lfr_std);
    row.seeds = cell.first.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string report_table(std::span<const EvalReport> reports, Format format, bool group_by_attack) {
  const std::vector<TableRow> rows = aggregate(reports, group_by_attack);
  if (format == Format::json) {
    nlohmann::json j{{"rows", nlohmann::json::array()}, {"reports", nlohmann::json::array()}};
    for (const TableRow& r : rows)
      j["rows"].push_back({{"strategy", r.strategy}, {"attack", r.attack}, {"acc_mean", r.acc_mean},
                           {"acc_std", r.acc_std}, {"lfr_mean", r.lfr_mean}, {"lfr_std", r.lfr_std},
                           {"seeds", r.seeds}});
    std::vector<EvalReport> sorted(reports.begin(), reports.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const EvalReport& a, const EvalReport& b) {
      return std::tie(a.strategy, a.attack, a.seed) < std::tie(b.strategy, b.attack, b.seed);
    });
    for (const EvalReport& r : sorted) j["reports"].push_back(to_json(r));
    return j.dump(2) + "\n";
  }
  if (format == Format::csv) {
    std::string out = "strategy,attack,acc_mean,acc_std,lfr_mean,lfr_std,seeds\n";
    for (const TableRow& r : rows)
      out += csv_field(r.strategy) + "," + csv_field(r.attack) + "," + fmt("%.6g", r.acc_mean) + "," +
             fmt("%.6g", r.acc_std) + "," + fmt("%.6g", r.lfr_mean) + "," + fmt("%.6g", r.lfr_std) + "," +
             std::to_string(r.seeds) + "\n";
    return out;
  }
  // Text: percentages; the lowest mean LFR per attack (ties included) in bold.
  std::map<std::string, double> best;
  for (const TableRow& r : rows) {
    auto it = best.find(r.attack);
    if (it == best.end() || r.lfr_mean < it->second) best[r.attack] = r.lfr_mean;
  }
  std::vector<std::array<std::string, 4>> cells = {{"strategy", "attack", "ACC (%) / LFR (%)", "seeds"}};
  for (const TableRow& r : rows) {
    std::string name = r.strategy;
    std::string cell = fmt("%.2f", 100.0 * r.acc_mean) + " ± " + fmt("%.2f", 100.0 * r.acc_std) + " / " +
                       fmt("%.2f", 100.0 * r.lfr_mean) + " ± " + fmt("%.2f", 100.0 * r.lfr_std);
    if (r.lfr_mean == best[r.attack]) {
      name = "**" + name + "**";
      cell = "**" + cell + "**";
    }
    cells.push_back({name, r.attack, cell, std::to_string(r.seeds)});
  }
  // Display width: UTF-8 continuation bytes take no column.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::array<std::size_t, 4> w{};
  for (const auto& row : cells)
    for (std::size_t k = 0; k < 4; ++k) w[k] = std::max(w[k], width(row[k]));
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) out += "| " + cells[i][k] + std::string(w[k] - width(cells[i][k]), ' ') + " ";
    out += "|\n";
    if (i == 0) {
      for (std::size_t k = 0; k < 4; ++k) out += "|" + std::string(w[k] + 2, '-');
      out += "|\n";
    }
  }
  return out;
}

}  // namespace headprune::eval
