#include "maskdg/eval.hpp"

#include "maskdg/error.hpp"
#include "maskdg/text_format.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

namespace maskdg {

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::Parameter, "auroc: scores and labels differ in length");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  long double positive_rank_sum = 0.0L;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks are 1-based; a tie group spanning [i, j) shares the midrank.
    const long double midrank = (static_cast<long double>(i + 1) + static_cast<long double>(j)) / 2.0L;
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw Error(ErrorKind::Parameter, "auroc: labels must be 0 or 1");
      if (y == 1) {
        positive_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::DegenerateLabels, "auroc needs both classes");
  const long double u = positive_rank_sum - static_cast<long double>(n_pos) * (n_pos + 1) / 2.0L;
  return static_cast<double>(u / (static_cast<long double>(n_pos) * n_neg));
}

double student_t_quantile(double probability, double dof) {
  boost::math::students_t dist(dof);
  return boost::math::quantile(dist, probability);
}

SeedSummary aggregate_seeds(std::span<const double> values, double confidence) {
  if (values.empty()) throw Error(ErrorKind::Parameter, "aggregate_seeds needs at least one value");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorKind::Parameter, "confidence must lie in (0,1)");
  SeedSummary s;
  s.n = static_cast<int>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
  if (s.n == 1) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / (s.n - 1));
  s.half_width = student_t_quantile(0.5 + confidence / 2.0, s.n - 1) * s.sd / std::sqrt(double(s.n));
  return s;
}

void validate_report(const EvalReport& report) {
  for (const ReportRow& r : report.rows) {
    if (r.n_seeds < 1) throw Error(ErrorKind::Parameter, "report row with n_seeds < 1");
    if (r.half_width && *r.half_width < 0.0) throw Error(ErrorKind::Parameter, "report row with negative half-width");
    if (std::find(report.dataset_order.begin(), report.dataset_order.end(), r.dataset) == report.dataset_order.end()) {
      throw Error(ErrorKind::Parameter, "report row dataset '" + r.dataset + "' missing from dataset order");
    }
  }
}

namespace {

std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++w;
  }
  return w;
}

std::string pad(const std::string& s, std::size_t width) { return s + std::string(width - display_width(s), ' '); }

std::string auroc_cell(const ReportRow& r) {
  std::string cell = format_fixed(r.mean, 1);
  if (r.half_width) cell += " ± " + format_fixed(*r.half_width, 1);
  return cell;
}

std::string gain_cell(const ReportRow& r) {
  if (!r.gain) return "-";
  const std::string v = format_fixed(*r.gain, 1);
  return v.front() == '-' ? v : "+" + v;
}

}  // namespace

std::string render_report(const EvalReport& report) {
  validate_report(report);
  const bool with_gain = std::any_of(report.rows.begin(), report.rows.end(), [](const ReportRow& r) { return r.gain.has_value(); });

  std::vector<std::vector<std::string>> table;
  table.push_back({"dataset", "target", "method", "mask", "AUROC"});
  if (with_gain) table.back().push_back("gain");
  for (const std::string& dataset : report.dataset_order) {
    for (const ReportRow& r : report.rows) {
      if (r.dataset != dataset) continue;
      table.push_back({r.dataset, r.target ? "*" : "", r.method, r.mask_kind, auroc_cell(r)});
      if (with_gain) table.back().push_back(gain_cell(r));
    }
  }
  std::vector<std::size_t> widths(table.front().size(), 0);
  for (const auto& row : table) {
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], display_width(row[c]));
  }
  std::string out;
  for (const auto& row : table) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      line += c + 1 < row.size() ? pad(row[c], widths[c]) + "  " : row[c];
    }
    out += line + "\n";
  }
  return out;
}

std::string format_results(std::span<const ResultRecord> records) {
  std::string out = "dataset\tmethod\tmask_kind\tseed\tauroc\n";
  for (const ResultRecord& r : records) {
    out += r.dataset + "\t" + r.method + "\t" + r.mask_kind + "\t" + format_int(r.seed) + "\t" + format_real(r.auroc) + "\n";
  }
  return out;
}

std::vector<ResultRecord> parse_results(const std::string& text) {
  std::vector<ResultRecord> out;
  int line_no = 0;
  for (const std::string& raw : split(text, '\n')) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty() || line.starts_with("dataset\t")) continue;
    const auto f = split(line, '\t');
    if (f.size() != 5) throw Error(ErrorKind::Parse, "results line " + std::to_string(line_no) + ": expected 5 fields");
    out.push_back({f[0], f[1], f[2], static_cast<int>(parse_int(f[3], "seed")), parse_real(f[4], "auroc")});
  }
  return out;
}

std::string render_report_svg(const EvalReport& report) {
  validate_report(report);
  std::vector<std::string> conditions;
  for (const ReportRow& r : report.rows) {
    const std::string c = r.method + "/" + r.mask_kind;
    if (std::find(conditions.begin(), conditions.end(), c) == conditions.end()) conditions.push_back(c);
  }
  static constexpr const char* kColors[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};
  const double bar = 14.0, gap = 24.0, left = 50.0, top = 20.0, plot_h = 200.0;
  const double group_w = bar * conditions.size() + gap;
  const double width = left + group_w * report.dataset_order.size() + 20.0;
  const double height = top + plot_h + 40.0 + 16.0 * conditions.size();
  const double lo = 50.0, hi = 100.0;
  auto y_of = [&](double v) { return top + plot_h * (1.0 - (std::clamp(v, lo, hi) - lo) / (hi - lo)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  for (int tick = 50; tick <= 100; tick += 10) {
    os << "<line x1=\"" << left << "\" x2=\"" << width - 10 << "\" y1=\"" << y_of(tick) << "\" y2=\"" << y_of(tick)
       << "\" stroke=\"#ddd\"/><text x=\"" << left - 6 << "\" y=\"" << y_of(tick) + 3
       << "\" text-anchor=\"end\">" << tick << "</text>\n";
  }
  for (std::size_t d = 0; d < report.dataset_order.size(); ++d) {
    const double x0 = left + gap / 2 + group_w * d;
    for (const ReportRow& r : report.rows) {
      if (r.dataset != report.dataset_order[d]) continue;
      const auto ci = std::find(conditions.begin(), conditions.end(), r.method + "/" + r.mask_kind) - conditions.begin();
      const double x = x0 + bar * ci;
      os << "<rect x=\"" << x << "\" y=\"" << y_of(r.mean) << "\" width=\"" << bar - 2 << "\" height=\""
         << top + plot_h - y_of(r.mean) << "\" fill=\"" << kColors[ci % 6] << "\"/>\n";
      if (r.half_width) {
        const double xc = x + (bar - 2) / 2;
        os << "<line x1=\"" << xc << "\" x2=\"" << xc << "\" y1=\"" << y_of(r.mean - *r.half_width) << "\" y2=\""
           << y_of(r.mean + *r.half_width) << "\" stroke=\"black\"/>\n";
      }
    }
    const bool target = std::any_of(report.rows.begin(), report.rows.end(),
                                     [&](const ReportRow& r) { return r.dataset == report.dataset_order[d] && r.target; });
    os << "<text x=\"" << x0 + bar * conditions.size() / 2 << "\" y=\"" << top + plot_h + 14
       << "\" text-anchor=\"middle\">" << report.dataset_order[d] << (target ? "*" : "") << "</text>\n";
  }
  for (std::size_t c = 0; c < conditions.size(); ++c) {
    const double y = top + plot_h + 30 + 16.0 * c;
    os << "<rect x=\"" << left << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\"" << kColors[c % 6]
       << "\"/><text x=\"" << left + 16 << "\" y=\"" << y << "\">" << conditions[c] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

EvalReport build_report(std::span<const ResultRecord> records, const std::vector<std::string>& dataset_order,
                        const std::vector<std::string>& target_datasets) {
  using Key = std::tuple<std::string, std::string, std::string>;
  std::vector<Key> keys;
  std::map<Key, std::vector<double>> values;
  for (const ResultRecord& r : records) {
    Key k{r.dataset, r.method, r.mask_kind};
    auto [it, inserted] = values.try_emplace(k);
    if (inserted) keys.push_back(k);
    it->second.push_back(100.0 * r.auroc);
  }
  EvalReport report;
  report.dataset_order = dataset_order;
  for (const std::string& dataset : dataset_order) {
    for (const Key& k : keys) {
      if (std::get<0>(k) != dataset) continue;
      const SeedSummary s = aggregate_seeds(values[k]);
      const bool target = std::find(target_datasets.begin(), target_datasets.end(), dataset) != target_datasets.end();
      report.rows.push_back({dataset, std::get<1>(k), std::get<2>(k), s.mean, s.half_width, s.n, target, std::nullopt});
    }
  }
  validate_report(report);
  return report;
}

void attach_gains(EvalReport& report, const std::string& baseline_method, const std::string& baseline_mask,
                  const std::string& method_filter, const std::string& mask_filter) {
  for (ReportRow& r : report.rows) {
    if (!method_filter.empty() && r.method != method_filter) continue;
    if (!mask_filter.empty() && r.mask_kind != mask_filter) continue;
    if (r.method == baseline_method && r.mask_kind == baseline_mask) continue;
    for (const ReportRow& b : report.rows) {
      if (b.dataset == r.dataset && b.method == baseline_method && b.mask_kind == baseline_mask) {
        r.gain = r.mean - b.mean;
        break;
      }
    }
  }
}

std::vector<ReportRow> select_rows(const EvalReport& report, const std::string& method, const std::string& mask_kind) {
  std::vector<ReportRow> out;
  for (const ReportRow& r : report.rows) {
    if (r.method == method && r.mask_kind == mask_kind) out.push_back(r);
  }
  return out;
}

ConditionComparison compare_conditions(std::span<const ReportRow> a, std::span<const ReportRow> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::Parameter, "compare_conditions: row sets cover different datasets");
  ConditionComparison out;
  int n_targets = 0;
  double target_sum = 0.0;
  for (const ReportRow& ra : a) {
    auto it = std::find_if(b.begin(), b.end(), [&](const ReportRow& rb) { return rb.dataset == ra.dataset; });
    if (it == b.end()) throw Error(ErrorKind::Parameter, "compare_conditions: dataset '" + ra.dataset + "' missing");
    DomainComparison d;
    d.dataset = ra.dataset;
    d.target = ra.target;
    d.difference = ra.mean - it->mean;
    d.cis_disjoint = std::abs(d.difference) > ra.half_width.value_or(0.0) + it->half_width.value_or(0.0);
    if (d.target) {
      ++n_targets;
      target_sum += d.difference;
      if (d.difference > 0.0) ++out.targets_won;
    }
    out.domains.push_back(d);
  }
  out.average_target_difference = n_targets > 0 ? target_sum / n_targets : 0.0;
  return out;
}

}  // namespace maskdg
