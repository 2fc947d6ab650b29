#include "crl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "crl/linalg.hpp"

namespace crl {

namespace {

std::vector<double> column(const Tensor& m, int c) {
  const int rows = m.shape()[0], cols = m.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = m[static_cast<std::int64_t>(r) * cols + c];
  return out;
}

// Average ranks (ties averaged).
std::vector<double> ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

double pearson_or_zero(const std::vector<double>& a, const std::vector<double>& b, bool* warn) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    if (warn) *warn = true;
    return 0.0;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::vector<double> correlation_matrix(const Tensor& z_hat, const Tensor& z_true,
                                       CorrMethod method, bool* warn) {
  if (z_hat.shape().size() != 2 || z_true.shape().size() != 2 ||
      z_hat.shape()[0] != z_true.shape()[0])
    throw std::invalid_argument("correlation_matrix: shapes disagree");
  const int n = z_hat.shape()[0];
  if (n < 3) throw std::invalid_argument("correlation_matrix: need at least 3 rows");
  const int dh = z_hat.shape()[1], dt = z_true.shape()[1];

  std::vector<std::vector<double>> hats(static_cast<std::size_t>(dh));
  std::vector<std::vector<double>> trues(static_cast<std::size_t>(dt));
  for (int i = 0; i < dh; ++i) {
    hats[static_cast<std::size_t>(i)] = column(z_hat, i);
    if (method == CorrMethod::kSpearman)
      hats[static_cast<std::size_t>(i)] = ranks(hats[static_cast<std::size_t>(i)]);
  }
  for (int j = 0; j < dt; ++j) {
    trues[static_cast<std::size_t>(j)] = column(z_true, j);
    if (method == CorrMethod::kSpearman)
      trues[static_cast<std::size_t>(j)] = ranks(trues[static_cast<std::size_t>(j)]);
  }

  std::vector<double> corr(static_cast<std::size_t>(dh) * dt);
  for (int i = 0; i < dh; ++i)
    for (int j = 0; j < dt; ++j)
      corr[static_cast<std::size_t>(i) * dt + j] =
          pearson_or_zero(hats[static_cast<std::size_t>(i)], trues[static_cast<std::size_t>(j)], warn);
  return corr;
}

std::vector<int> max_assignment(const std::vector<double>& value, int rows, int cols) {
  // Hungarian algorithm with potentials on the square padded cost matrix;
  // cost = maxval - value turns maximization into minimization.
  const int n = std::max(rows, cols);
  double maxval = 0.0;
  for (double v : value) maxval = std::max(maxval, v);
  auto cost = [&](int r, int c) -> double {
    if (r >= rows || c >= cols) return maxval;  // dummy pads carry value 0
    return maxval - value[static_cast<std::size_t>(r) * cols + c];
  };

  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }

  std::vector<int> row_to_col(static_cast<std::size_t>(rows), -1);
  for (int j = 1; j <= n; ++j) {
    const int r = p[static_cast<std::size_t>(j)] - 1;
    const int c = j - 1;
    if (r < rows && c < cols) row_to_col[static_cast<std::size_t>(r)] = c;
  }
  return row_to_col;
}

std::pair<double, std::vector<int>> mcc_from_corr(const std::vector<double>& corr, int d_hat,
                                                  int d_true) {
  std::vector<double> abs_corr(corr.size());
  for (std::size_t i = 0; i < corr.size(); ++i) abs_corr[i] = std::abs(corr[i]);
  std::vector<int> assign = max_assignment(abs_corr, d_hat, d_true);
  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < d_hat; ++i)
    if (assign[static_cast<std::size_t>(i)] >= 0) {
      total += abs_corr[static_cast<std::size_t>(i) * d_true + assign[static_cast<std::size_t>(i)]];
      ++pairs;
    }
  return {pairs > 0 ? total / pairs : 0.0, assign};
}

std::pair<double, std::vector<int>> mcc(const Tensor& z_hat, const Tensor& z_true,
                                        CorrMethod method) {
  const std::vector<double> corr = correlation_matrix(z_hat, z_true, method);
  return mcc_from_corr(corr, z_hat.shape()[1], z_true.shape()[1]);
}

double r2_score(const Tensor& z_hat, const Tensor& z_true, double ridge_alpha,
                std::vector<double>* raw) {
  const int n = z_hat.shape()[0];
  if (n < 20) throw std::invalid_argument("r2_score: need at least 20 samples");
  if (z_true.shape()[0] != n) throw std::invalid_argument("r2_score: row counts disagree");
  const int dh = z_hat.shape()[1], dt = z_true.shape()[1];
  const int n_fit = n / 2, n_held = n - n_fit;

  // Column means on the fit half.
  std::vector<double> mx(static_cast<std::size_t>(dh), 0.0), my(static_cast<std::size_t>(dt), 0.0);
  for (int r = 0; r < n_fit; ++r) {
    for (int i = 0; i < dh; ++i) mx[static_cast<std::size_t>(i)] += z_hat[static_cast<std::int64_t>(r) * dh + i];
    for (int j = 0; j < dt; ++j) my[static_cast<std::size_t>(j)] += z_true[static_cast<std::int64_t>(r) * dt + j];
  }
  for (auto& v : mx) v /= n_fit;
  for (auto& v : my) v /= n_fit;

  // Normal equations on centered fit data.
  std::vector<double> xtx(static_cast<std::size_t>(dh) * dh, 0.0);
  std::vector<double> xty(static_cast<std::size_t>(dh) * dt, 0.0);
  for (int r = 0; r < n_fit; ++r)
    for (int i = 0; i < dh; ++i) {
      const double xi = z_hat[static_cast<std::int64_t>(r) * dh + i] - mx[static_cast<std::size_t>(i)];
      for (int j = 0; j < dh; ++j)
        xtx[static_cast<std::size_t>(i) * dh + j] +=
            xi * (z_hat[static_cast<std::int64_t>(r) * dh + j] - mx[static_cast<std::size_t>(j)]);
      for (int j = 0; j < dt; ++j)
        xty[static_cast<std::size_t>(i) * dt + j] +=
            xi * (z_true[static_cast<std::int64_t>(r) * dt + j] - my[static_cast<std::size_t>(j)]);
    }
  for (int i = 0; i < dh; ++i) xtx[static_cast<std::size_t>(i) * dh + i] += ridge_alpha;

  std::vector<double> w;
  try {
    w = cholesky_solve(xtx, dh, xty, dt);
  } catch (const std::domain_error&) {
    throw std::invalid_argument(
        "r2_score: singular normal equations; use a nonzero ridge alpha");
  }

  // Held-out residuals against held-out means.
  std::vector<double> mh(static_cast<std::size_t>(dt), 0.0);
  for (int r = n_fit; r < n; ++r)
    for (int j = 0; j < dt; ++j) mh[static_cast<std::size_t>(j)] += z_true[static_cast<std::int64_t>(r) * dt + j];
  for (auto& v : mh) v /= n_held;

  std::vector<double> ss_res(static_cast<std::size_t>(dt), 0.0), ss_tot(static_cast<std::size_t>(dt), 0.0);
  for (int r = n_fit; r < n; ++r)
    for (int j = 0; j < dt; ++j) {
      double pred = my[static_cast<std::size_t>(j)];
      for (int i = 0; i < dh; ++i)
        pred += (z_hat[static_cast<std::int64_t>(r) * dh + i] - mx[static_cast<std::size_t>(i)]) *
                w[static_cast<std::size_t>(i) * dt + j];
      const double y = z_true[static_cast<std::int64_t>(r) * dt + j];
      ss_res[static_cast<std::size_t>(j)] += (y - pred) * (y - pred);
      ss_tot[static_cast<std::size_t>(j)] += (y - mh[static_cast<std::size_t>(j)]) * (y - mh[static_cast<std::size_t>(j)]);
    }

  double total = 0.0;
  if (raw) raw->clear();
  for (int j = 0; j < dt; ++j) {
    const double r2 = ss_tot[static_cast<std::size_t>(j)] > 0.0
                          ? 1.0 - ss_res[static_cast<std::size_t>(j)] / ss_tot[static_cast<std::size_t>(j)]
                          : 0.0;
    if (raw) raw->push_back(r2);
    total += r2;
  }
  return std::max(0.0, total / dt);
}

EvalReport evaluate(const Tensor& z_hat, const Tensor& z_true, CorrMethod method,
                    double ridge_alpha) {
  EvalReport rep;
  rep.method = method;
  rep.d_hat = z_hat.shape()[1];
  rep.d_true = z_true.shape()[1];
  rep.n_eval = z_hat.shape()[0];
  rep.corr_matrix = correlation_matrix(z_hat, z_true, method, &rep.constant_column);
  auto [m, assign] = mcc_from_corr(rep.corr_matrix, rep.d_hat, rep.d_true);
  rep.mcc = m;
  rep.assignment = assign;
  rep.r2 = r2_score(z_hat, z_true, ridge_alpha, &rep.r2_raw);
  return rep;
}

namespace {

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

std::string emit_report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "task,constraint,mcc_mean,mcc_std,r2_mean,r2_std,seeds,method\n";
  for (const auto& r : rows) {
    os << r.task << ',' << r.constraint << ',';
    if (r.failed) {
      os << "failed,failed,failed,failed," << r.seeds << ',' << r.method << '\n';
      continue;
    }
    os << fmt_full(r.mcc_mean) << ',' << fmt_full(r.mcc_std) << ',' << fmt_full(r.r2_mean) << ','
       << fmt_full(r.r2_std) << ',' << r.seeds << ',' << r.method << '\n';
  }
  return os.str();
}

std::string emit_report_markdown(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "| Task | Constraint | MCC | R2 | Seeds | Method |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    os << "| " << r.task << " | " << r.constraint << " | ";
    if (r.failed) {
      os << "failed | failed | " << r.seeds << " | " << r.method << " |\n";
      continue;
    }
    os << fmt2(r.mcc_mean) << " ± " << fmt2(r.mcc_std) << " | " << fmt2(r.r2_mean) << " ± "
       << fmt2(r.r2_std) << " | " << r.seeds << " | " << r.method << " |\n";
  }
  return os.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) ||
      line != "task,constraint,mcc_mean,mcc_std,r2_mean,r2_std,seeds,method")
    throw std::invalid_argument("parse_report_csv: missing or unexpected header");
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8)
      throw std::invalid_argument("parse_report_csv: bad row '" + line + "'");
    ReportRow r;
    r.task = cells[0];
    r.constraint = cells[1];
    if (cells[2] == "failed") {
      r.failed = true;
    } else {
      r.mcc_mean = std::stod(cells[2]);
      r.mcc_std = std::stod(cells[3]);
      r.r2_mean = std::stod(cells[4]);
      r.r2_std = std::stod(cells[5]);
    }
    r.seeds = std::stoi(cells[6]);
    r.method = cells[7];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace crl
