#include "skimlab/evalreport.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"
#include "skimlab/common.hpp"

namespace skimlab {

namespace {

int overlap(const std::vector<int>& predicted, const std::unordered_set<int>& relevant, int k) {
  int kk = std::min<int>(k, static_cast<int>(predicted.size()));
  int hits = 0;
  for (int i = 0; i < kk; ++i) {
    if (relevant.count(predicted[i]) != 0) ++hits;
  }
  return hits;
}

std::string metric_label(const std::string& split, const char* metric, int k) {
  return split + "_" + metric + "@" + std::to_string(k);
}

}  // namespace

double recall_at_k(const std::vector<int>& predicted, const std::unordered_set<int>& relevant,
                   int k) {
  if (k < 1) throw ArgumentError("recall_at_k: k must be >= 1");
  if (relevant.empty()) {
    throw ArgumentError("recall_at_k: undefined for empty relevance set");
  }
  return static_cast<double>(overlap(predicted, relevant, k)) /
         static_cast<double>(relevant.size());
}

double precision_at_k(const std::vector<int>& predicted, const std::unordered_set<int>& relevant,
                      int k) {
  if (k < 1) throw ArgumentError("precision_at_k: k must be >= 1");
  return static_cast<double>(overlap(predicted, relevant, k)) / static_cast<double>(k);
}

const SplitMetrics& EvalReport::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.split == name) return s;
  }
  throw ArgumentError("eval report: no split named '" + name + "'");
}

EvalReport evaluate_run(const OvaModel& model, const World& world,
                        const InteractionSet& biased_test, const InteractionSet& unbiased_test,
                        const std::vector<int>& ks, const std::string& method_name, int threads) {
  if (ks.empty()) throw ArgumentError("evaluate_run: empty k list");
  if (biased_test.pairs.empty() && unbiased_test.pairs.empty()) {
    throw ArgumentError("evaluate_run: both test splits are empty");
  }
  EvalReport report;
  report.method = method_name;
  report.ks = ks;
  const int k_max = *std::max_element(ks.begin(), ks.end());

  struct SplitInput {
    const char* name;
    const InteractionSet* set;
  };
  for (const SplitInput si : {SplitInput{"biased", &biased_test},
                              SplitInput{"unbiased", &unbiased_test}}) {
    std::map<int, std::unordered_set<int>> relevant;
    for (const auto& p : si.set->pairs) relevant[p.query].insert(p.doc);
    std::vector<int> queries;
    queries.reserve(relevant.size());
    for (const auto& [q, docs] : relevant) {
      if (!docs.empty()) queries.push_back(q);
    }
    SplitMetrics sm;
    sm.split = si.name;
    sm.n_queries = static_cast<int>(queries.size());
    if (queries.empty()) {
      sm.recall.assign(ks.size(), 0.0);
      sm.precision.assign(ks.size(), 0.0);
      report.splits.push_back(std::move(sm));
      continue;
    }
    auto ranked = predict_topk(model, queries, world, k_max, threads);
    for (int k : ks) {
      std::vector<double> rec(queries.size()), prec(queries.size());
      for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& rel = relevant[queries[i]];
        rec[i] = recall_at_k(ranked[i], rel, k);
        prec[i] = precision_at_k(ranked[i], rel, k);
      }
      sm.recall.push_back(kahan_mean(rec));
      sm.precision.push_back(kahan_mean(prec));
    }
    report.splits.push_back(std::move(sm));
  }
  return report;
}

namespace {

struct Column {
  std::string label;
  std::vector<double> values;  // one per report
};

std::vector<Column> tabulate(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw ArgumentError("compare_runs: no reports");
  const auto& ks = reports.front().ks;
  for (const auto& r : reports) {
    if (r.ks != ks) throw ArgumentError("compare_runs: reports disagree on k list");
    if (r.splits.size() != reports.front().splits.size()) {
      throw ArgumentError("compare_runs: reports disagree on splits");
    }
  }
  std::vector<Column> cols;
  for (std::size_t s = 0; s < reports.front().splits.size(); ++s) {
    const std::string split = reports.front().splits[s].split;
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
      Column rec{metric_label(split, "R", ks[ki]), {}};
      Column prec{metric_label(split, "P", ks[ki]), {}};
      for (const auto& r : reports) {
        rec.values.push_back(r.splits[s].recall[ki]);
        prec.values.push_back(r.splits[s].precision[ki]);
      }
      cols.push_back(std::move(rec));
      cols.push_back(std::move(prec));
    }
  }
  return cols;
}

// (best row, delta to second best in absolute points); delta < 0 marks "not
// applicable" for single-row tables.
std::pair<int, double> best_and_delta(const Column& col) {
  int best = 0;
  for (std::size_t i = 1; i < col.values.size(); ++i) {
    if (col.values[i] > col.values[best]) best = static_cast<int>(i);
  }
  if (col.values.size() < 2) return {best, -1.0};
  double second = -1.0;
  for (std::size_t i = 0; i < col.values.size(); ++i) {
    if (static_cast<int>(i) == best) continue;
    second = std::max(second, col.values[i]);
  }
  return {best, (col.values[best] - second) * 100.0};
}

std::string fmt_metric(double v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return std::string(buf);
}

}  // namespace

std::string compare_runs_csv(const std::vector<EvalReport>& reports) {
  auto cols = tabulate(reports);
  std::ostringstream out;
  out << "method";
  for (const auto& c : cols) out << ',' << c.label;
  out << '\n';
  for (std::size_t r = 0; r < reports.size(); ++r) {
    out << reports[r].method;
    for (const auto& c : cols) out << ',' << fmt_metric(c.values[r]);
    out << '\n';
  }
  out << "best";
  for (const auto& c : cols) out << ',' << reports[best_and_delta(c).first].method;
  out << '\n';
  out << "delta_points";
  for (const auto& c : cols) {
    auto [best, delta] = best_and_delta(c);
    out << ',' << (delta < 0.0 ? std::string() : fmt_metric(delta));
  }
  out << '\n';
  return out.str();
}

std::string compare_runs_markdown(const std::vector<EvalReport>& reports) {
  auto cols = tabulate(reports);
  std::ostringstream out;
  out << "| method |";
  for (const auto& c : cols) out << ' ' << c.label << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < cols.size(); ++i) out << "---|";
  out << '\n';
  for (std::size_t r = 0; r < reports.size(); ++r) {
    out << "| " << reports[r].method << " |";
    for (const auto& c : cols) {
      bool is_best = best_and_delta(c).first == static_cast<int>(r) && reports.size() > 1;
      out << ' ' << (is_best ? "**" + fmt_metric(c.values[r]) + "**" : fmt_metric(c.values[r]))
          << " |";
    }
    out << '\n';
  }
  out << "| delta_points |";
  for (const auto& c : cols) {
    auto [best, delta] = best_and_delta(c);
    out << ' ' << (delta < 0.0 ? std::string("-") : fmt_metric(delta)) << " |";
  }
  out << '\n';
  return out.str();
}

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j{{"method", report.method}, {"ks", report.ks}};
  for (const auto& s : report.splits) {
    j["splits"].push_back(nlohmann::json{{"split", s.split},
                                         {"n_queries", s.n_queries},
                                         {"recall", s.recall},
                                         {"precision", s.precision}});
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport report;
  report.method = j.at("method").get<std::string>();
  report.ks = j.at("ks").get<std::vector<int>>();
  for (const auto& s : j.at("splits")) {
    SplitMetrics sm;
    sm.split = s.at("split").get<std::string>();
    sm.n_queries = s.at("n_queries").get<int>();
    sm.recall = s.at("recall").get<std::vector<double>>();
    sm.precision = s.at("precision").get<std::vector<double>>();
    report.splits.push_back(std::move(sm));
  }
  return report;
}

}  // namespace skimlab
