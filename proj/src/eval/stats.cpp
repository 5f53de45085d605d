#include "dxagent/eval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dxagent/core/error.hpp"

namespace dxagent::eval {

namespace {

// Lentz's method for the continued fraction of I_x(a, b).
double beta_cf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) fail(ErrorCode::InvalidArgument, "incomplete_beta needs a, b > 0");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
    return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, double df) {
    if (!(df > 0)) fail(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double mean(const std::vector<double>& v) {
    if (v.empty()) fail(ErrorCode::EmptyInput, "mean of an empty sample");
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
    if (v.empty()) fail(ErrorCode::EmptyInput, "median of an empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

static double sum_sq_dev(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
}

double population_sd(const std::vector<double>& v) { return std::sqrt(sum_sq_dev(v) / static_cast<double>(v.size())); }

double sample_sd(const std::vector<double>& v) {
    if (v.size() < 2) fail(ErrorCode::InvalidArgument, "sample standard deviation needs at least two values");
    return std::sqrt(sum_sq_dev(v) / static_cast<double>(v.size() - 1));
}

PairedTTest paired_t_test(const std::vector<double>& diffs) {
    if (diffs.size() < 2) fail(ErrorCode::NoPairs, "paired t-test needs at least two pairs");
    PairedTTest r;
    r.n = diffs.size();
    r.mean_diff = mean(diffs);
    const bool constant = std::all_of(diffs.begin(), diffs.end(), [&](double d) { return d == diffs.front(); });
    if (constant) fail(ErrorCode::ZeroVariance, "all paired differences are equal; t and dz are undefined");
    r.sd_diff = sample_sd(diffs);
    r.df = static_cast<double>(r.n - 1);
    r.t = r.mean_diff / (r.sd_diff / std::sqrt(static_cast<double>(r.n)));
    r.p = t_two_sided_p(r.t, r.df);
    r.cohens_dz = r.mean_diff / r.sd_diff;
    return r;
}

}  // namespace dxagent::eval
