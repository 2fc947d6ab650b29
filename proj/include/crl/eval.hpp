#pragma once

// Identifiability metrics: correlation matrices (Pearson/Spearman), MCC via
// optimal linear assignment on |corr|, held-out ridge R^2, and table
// emission for grid results.

#include <string>
#include <utility>
#include <vector>

#include "crl/tensor.hpp"

namespace crl {

enum class CorrMethod { kPearson, kSpearman };

struct EvalReport {
  double mcc = 0.0;
  double r2 = 0.0;                  // summary, clamped at 0
  std::vector<double> r2_raw;       // per-true-dimension values
  std::vector<double> corr_matrix;  // row-major [d_hat x d_true]
  int d_hat = 0;
  int d_true = 0;
  std::vector<int> assignment;  // learned dim -> true dim, -1 if unassigned
  CorrMethod method = CorrMethod::kPearson;
  int n_eval = 0;
  bool constant_column = false;  // some corr entries were zeroed
};

// Per-pair correlations; constant columns yield 0 entries and set *warn.
std::vector<double> correlation_matrix(const Tensor& z_hat, const Tensor& z_true,
                                       CorrMethod method, bool* warn = nullptr);

// Maximum-value rectangular assignment (Hungarian on the padded square).
// Returns, per row, the assigned column or -1.
std::vector<int> max_assignment(const std::vector<double>& value, int rows, int cols);

std::pair<double, std::vector<int>> mcc_from_corr(const std::vector<double>& corr, int d_hat,
                                                  int d_true);
std::pair<double, std::vector<int>> mcc(const Tensor& z_hat, const Tensor& z_true,
                                        CorrMethod method);

// Fits Z_hat -> Z_true by closed-form ridge on the first half, reports the
// mean per-dimension R^2 on the second half.
double r2_score(const Tensor& z_hat, const Tensor& z_true, double ridge_alpha,
                std::vector<double>* raw = nullptr);

EvalReport evaluate(const Tensor& z_hat, const Tensor& z_true, CorrMethod method,
                    double ridge_alpha);

struct ReportRow {
  std::string task;
  std::string constraint;
  double mcc_mean = 0.0, mcc_std = 0.0;
  double r2_mean = 0.0, r2_std = 0.0;
  int seeds = 0;
  std::string method;
  bool failed = false;
};

std::string emit_report_csv(const std::vector<ReportRow>& rows);
std::string emit_report_markdown(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace crl
