#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace maskdg {

// P(s+ > s-) + 0.5 P(s+ == s-) over all positive/negative pairs, computed
// from midranks in O(n log n). Throws DegenerateLabels unless both classes
// are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct SeedSummary {
  double mean = 0.0;
  std::optional<double> half_width;  // absent for a single seed
  int n = 0;
  double sd = 0.0;
};

// Mean and two-sided Student-t half-width t_{(1+c)/2, n-1} * sd / sqrt(n).
SeedSummary aggregate_seeds(std::span<const double> values, double confidence = 0.95);

// Two-sided Student-t quantile helper, exposed for tests.
double student_t_quantile(double probability, double dof);

struct ReportRow {
  std::string dataset;
  std::string method;
  std::string mask_kind;
  double mean = 0.0;  // AUROC in percentage points
  std::optional<double> half_width;
  int n_seeds = 1;
  bool target = false;
  std::optional<double> gain;
};

struct EvalReport {
  // Datasets in display order: source first, then targets in suite order.
  std::vector<std::string> dataset_order;
  std::vector<ReportRow> rows;
};

// Checks n_seeds >= 1, half-widths >= 0 and that every row's dataset is
// listed in dataset_order.
void validate_report(const EvalReport& report);

// Fixed-width text table. Cells read "mean ± hw" with one decimal; targets
// carry a '*' marker; the gain column appears only if some row has a gain.
std::string render_report(const EvalReport& report);

// Grouped bar chart (SVG) of every row's mean AUROC per dataset with CI
// whiskers.
std::string render_report_svg(const EvalReport& report);

// One line per result of an experiment cell.
struct ResultRecord {
  std::string dataset;
  std::string method;
  std::string mask_kind;
  int seed = 0;
  double auroc = 0.0;  // in [0, 1]
};

// Tab-delimited with header "dataset\tmethod\tmask_kind\tseed\tauroc".
std::string format_results(std::span<const ResultRecord> records);
std::vector<ResultRecord> parse_results(const std::string& text);

// Groups records by (dataset, method, mask_kind), aggregating over seeds and
// converting to percentage points. Row order follows dataset_order, then
// first appearance.
EvalReport build_report(std::span<const ResultRecord> records, const std::vector<std::string>& dataset_order,
                        const std::vector<std::string>& target_datasets);

// Sets gain = mean(row) - mean(baseline row of the same dataset) for every
// row matching (method, mask_kind) filters; empty filters match anything.
void attach_gains(EvalReport& report, const std::string& baseline_method, const std::string& baseline_mask,
                  const std::string& method_filter = "", const std::string& mask_filter = "");

// Selects rows of one (method, mask_kind) condition.
std::vector<ReportRow> select_rows(const EvalReport& report, const std::string& method, const std::string& mask_kind);

struct DomainComparison {
  std::string dataset;
  bool target = false;
  double difference = 0.0;   // mean(A) - mean(B)
  bool cis_disjoint = false; // 95% intervals do not overlap
};

struct ConditionComparison {
  std::vector<DomainComparison> domains;
  double average_target_difference = 0.0;
  int targets_won = 0;  // targets with difference > 0
};

// Per-domain differences of A over B. Both row sets must cover the same
// datasets (order may differ).
ConditionComparison compare_conditions(std::span<const ReportRow> a, std::span<const ReportRow> b);

}  // namespace maskdg
