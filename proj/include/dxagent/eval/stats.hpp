#pragma once

#include <optional>
#include <vector>

namespace dxagent::eval {

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

// Two-sided p-value of Student's t with df degrees of freedom.
double t_two_sided_p(double t, double df);

double mean(const std::vector<double>& v);
double median(std::vector<double> v);
double population_sd(const std::vector<double>& v);
double sample_sd(const std::vector<double>& v);

struct PairedTTest {
    std::size_t n = 0;
    double mean_diff = 0.0;
    double sd_diff = 0.0;  // sample (n-1)
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;
    double cohens_dz = 0.0;
};

/// diffs are per-pair differences. Throws NoPairs for n < 2 and
/// ZeroVariance when every difference is identical (t and dz undefined).
PairedTTest paired_t_test(const std::vector<double>& diffs);

}  // namespace dxagent::eval
