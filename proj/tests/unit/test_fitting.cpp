#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "qdspin/errors.hpp"
#include "qdspin/fitting.hpp"

using namespace qdspin;

namespace {

const double kOmega = 2.0 * M_PI * 12.70;

DataSeries synth(const GaussCosineParams& p, std::size_t n, double t1, double noise = 0.0,
                 std::uint64_t seed = 0) {
    DataSeries d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = t1 * static_cast<double>(i) / static_cast<double>(n - 1);
        d.x.push_back(t);
        d.y.push_back(model_gauss_cosine(p, t) + noise * g(rng));
    }
    return d;
}

std::string temp_file(const std::string& name, const std::string& text) {
    const auto path = std::filesystem::temp_directory_path() / ("qdspin_test_" + name);
    std::ofstream(path) << text;
    return path.string();
}

}  // namespace

TEST_CASE("gauss-cosine model") {
    const GaussCosineParams p{1.5, kOmega, 0.3, 2.2, 0.1};
    CHECK(model_gauss_cosine(p, 0.0) == doctest::Approx(1.5 * std::cos(0.3) + 0.1));
    const GaussCosineParams q{2.0, kOmega, 0.0, 2.2, 0.0};
    CHECK(model_gauss_cosine(q, 2.2) == doctest::Approx(2.0 * std::cos(kOmega * 2.2) / M_E));
    // zero crossings 1/(2 nu) apart
    const double first = (M_PI / 2) / kOmega, second = (3 * M_PI / 2) / kOmega;
    CHECK(std::abs(model_gauss_cosine(q, first)) < 1e-12);
    CHECK(std::abs(model_gauss_cosine(q, second)) < 1e-12);
    CHECK(second - first == doctest::Approx(1.0 / (2.0 * 12.70)).epsilon(1e-12));
}

TEST_CASE("rabi power model") {
    const double a = M_PI / 10.0;
    CHECK(model_rabi_power(3.0, a, 0.0) == 0.0);
    CHECK(model_rabi_power(3.0, a, std::pow(M_PI / a, 2)) == doctest::Approx(3.0));
    CHECK(model_rabi_power(3.0, a, 25.0) == doctest::Approx(1.5));
}

TEST_CASE("noiseless recovery from perturbed start") {
    const GaussCosineParams truth{0.8, kOmega, 0.4, 2.2, 0.05};
    const DataSeries d = synth(truth, 400, 3.0);
    const std::vector<double> t = {truth.amplitude, truth.angular_frequency, truth.phase, truth.dephasing_time,
                                   truth.offset};
    std::vector<double> p0 = t;
    p0[0] *= 1.1;
    p0[1] *= 1.002;  // 10% of the frequency is several fringes off; kept close
    p0[2] *= 0.9;
    p0[3] *= 1.1;
    p0[4] *= 0.9;
    const FitResult r = lm_fit(gauss_cosine_model(), d, p0);
    CHECK(r.converged);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(r.params[i] == doctest::Approx(t[i]).epsilon(1e-6));

    // the periodogram start handles a 10% frequency offset on its own
    const FitResult auto_fit = fit_gauss_cosine(d);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(auto_fit.params[i] == doctest::Approx(t[i]).epsilon(1e-6));
}

TEST_CASE("linear model vs closed-form least squares") {
    DataSeries d;
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 0.3);
    for (int i = 0; i < 50; ++i) {
        d.x.push_back(0.1 * i);
        d.y.push_back(1.7 * 0.1 * i - 0.4 + g(rng));
    }
    const double n = 50.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < 50; ++i) {
        sx += d.x[i];
        sy += d.y[i];
        sxx += d.x[i] * d.x[i];
        sxy += d.x[i] * d.y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    const FitResult r = lm_fit(linear_model(), d, {0.0, 0.0});
    CHECK(std::abs(r.params[0] - slope) < 1e-10);
    CHECK(std::abs(r.params[1] - intercept) < 1e-10);
}

TEST_CASE("Monte-Carlo T2* and frequency recovery at 5% noise") {
    const GaussCosineParams truth{1.0, kOmega, 0.0, 2.2, 0.0};
    GaussCosineFitOptions opt;
    opt.background_subtract = true;
    int t2_ok = 0, nu_ok = 0, covered = 0;
    const int trials = 200;
    for (int s = 0; s < trials; ++s) {
        const FitResult r = fit_gauss_cosine(synth(truth, 400, 3.0, 0.05, 1000 + s), opt);
        const double t2 = r.param("T2star");
        t2_ok += std::abs(t2 - 2.2) <= 0.1;
        nu_ok += std::abs(r.param("omega_L") / (2 * M_PI) - 12.70) <= 0.02;
        covered += std::abs(t2 - 2.2) <= r.uncertainty("T2star");
    }
    CHECK(t2_ok >= 0.95 * trials);
    CHECK(nu_ok >= 0.95 * trials);
    const double coverage = static_cast<double>(covered) / trials;
    CHECK(coverage >= 0.58);
    CHECK(coverage <= 0.78);
}

TEST_CASE("fit properties") {
    const GaussCosineParams truth{0.6, kOmega, -0.7, 2.2, 0.2};
    const DataSeries d = synth(truth, 300, 3.0, 0.02, 3);
    const FitResult r = fit_gauss_cosine(d);
    REQUIRE(r.converged);

    // residual stationarity
    const FitModel m = gauss_cosine_model();
    std::vector<double> grad(r.params.size(), 0.0);
    for (std::size_t k = 0; k < r.params.size(); ++k) {
        std::vector<double> hi = r.params, lo = r.params;
        const double h = 1e-6 * std::max(1.0, std::abs(r.params[k]));
        hi[k] += h;
        lo[k] -= h;
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double res = d.y[i] - m.eval(r.params, d.x[i]);
            grad[k] += res * (m.eval(hi, d.x[i]) - m.eval(lo, d.x[i])) / (2 * h);
        }
    }
    double gmax = 0.0;
    for (double g : grad) gmax = std::max(gmax, std::abs(g));
    CHECK(gmax < 1e-6 * std::max(1.0, r.cost) * d.size());

    // phase shifted by 2 pi gives the same cost
    std::vector<double> p0 = r.params;
    p0[2] += 2 * M_PI;
    const FitResult shifted = lm_fit(m, d, p0);
    CHECK(std::abs(shifted.cost - r.cost) < 1e-10);

    // scaling y scales the amplitude error and leaves omega, T2* unchanged
    DataSeries big = d;
    for (double& y : big.y) y *= 7.0;
    const FitResult rb = fit_gauss_cosine(big);
    CHECK(rb.uncertainty("A") == doctest::Approx(7.0 * r.uncertainty("A")).epsilon(1e-6));
    CHECK(std::abs(rb.param("omega_L") - r.param("omega_L")) < 1e-8 * r.param("omega_L"));
    CHECK(std::abs(rb.param("T2star") - r.param("T2star")) < 1e-8 * r.param("T2star"));

    // covariance symmetric PSD, errors from its diagonal
    CHECK((r.covariance - r.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-15 * r.covariance.cwiseAbs().maxCoeff() + 1e-300);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.covariance);
    CHECK(es.eigenvalues().minCoeff() > -1e-12 * es.eigenvalues().maxCoeff());
    for (std::size_t i = 0; i < r.params.size(); ++i)
        CHECK(r.uncertainties[i] == doctest::Approx(std::sqrt(r.covariance(i, i))));
}

TEST_CASE("sigma-weighted covariance") {
    const GaussCosineParams truth{1.0, kOmega, 0.0, 2.2, 0.0};
    DataSeries d = synth(truth, 200, 3.0, 0.05, 11);
    d.sigma = std::vector<double>(d.size(), 0.05);
    const FitResult r = fit_gauss_cosine(d);
    CHECK(r.chi2_reduced == doctest::Approx(1.0).epsilon(0.25));
    DataSeries doubled = d;
    for (double& s : *doubled.sigma) s *= 2.0;
    const FitResult r2 = fit_gauss_cosine(doubled);
    CHECK(r2.uncertainty("T2star") == doctest::Approx(2.0 * r.uncertainty("T2star")).epsilon(1e-4));
}

TEST_CASE("free exponent diagnostic recovers 2") {
    GaussCosineFitOptions o;
    o.free_exponent = true;
    const FitResult r = fit_gauss_cosine(synth({1.0, kOmega, 0.2, 2.2, 0.0}, 400, 3.0), o);
    CHECK(r.param("exponent") == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("rabi power fit from the 25 uW anchor") {
    DataSeries d;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 0.01);
    const double a = M_PI / 10.0;
    for (int i = 1; i <= 60; ++i) {
        const double p = 2.0 * i;
        d.x.push_back(p);
        d.y.push_back(model_rabi_power(1.0, a, p) + g(rng));
    }
    const FitResult r = fit_rabi_power(d);
    CHECK(r.param("a") == doctest::Approx(a).epsilon(0.01));
}

TEST_CASE("g factors") {
    CHECK(extract_g_factor(3.37, 0.5) == doctest::Approx(0.48156).epsilon(1e-4));
    CHECK(extract_g_factor(12.70, 2.0) == doctest::Approx(0.45369).epsilon(1e-4));
    CHECK(extract_g_factor(0.0, 1.0) == 0.0);
    CHECK_THROWS_AS(extract_g_factor(1.0, 0.0), DomainError);
}

TEST_CASE("failures") {
    DataSeries few;
    few.x = {0.0, 1.0};
    few.y = {1.0, 2.0};
    CHECK_THROWS(fit_gauss_cosine(few));
    DataSeries unsorted;
    unsorted.x = {0.0, 2.0, 1.0};
    unsorted.y = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(unsorted.validate(), DomainError);
    // two identical columns in the Jacobian
    const FitModel degenerate{"deg", {"a", "b"}, [](std::span<const double> p, double x) { return (p[0] + p[1]) * x; }};
    DataSeries line;
    for (int i = 0; i < 10; ++i) {
        line.x.push_back(i);
        line.y.push_back(2.0 * i);
    }
    CHECK_THROWS_AS(lm_fit(degenerate, line, {1.0, 1.0}), FitError);
    FitOptions tight;
    tight.max_iter = 1;
    const FitResult r = lm_fit(gauss_cosine_model(), synth({1.0, kOmega, 0.0, 2.2, 0.0}, 100, 3.0),
                               {0.5, kOmega * 1.01, 0.3, 1.0, 0.1}, tight);
    CHECK_FALSE(r.converged);
    CHECK_THROWS_AS(model_by_name("lorentzian"), DomainError);
}

TEST_CASE("CSV round trip and diagnostics") {
    const DataSeries d = synth({1.0, kOmega, 0.0, 2.2, 0.0}, 20, 3.0);
    const auto path = (std::filesystem::temp_directory_path() / "qdspin_test_rt.csv").string();
    write_data_csv(d, path);
    const DataSeries back = read_data_csv(path);
    CHECK(back.x == d.x);
    CHECK(back.y == d.y);

    const auto bad = temp_file("bad.csv", "x,y\n0,1\n1,abc\n2,3\n");
    try {
        read_data_csv(bad);
        FAIL("malformed row accepted");
    } catch (const CsvError& e) {
        CHECK(e.row() == 3u);
    }
    const auto ragged = temp_file("ragged.csv", "x,y,s\n0,1,0.1\n1,2\n");
    CHECK_THROWS_AS(read_data_csv(ragged), CsvError);
    const auto sigma = temp_file("sigma.csv", "x,y,s\n0,1,0.1\n1,2,0.2\n2,2,0.2\n");
    CHECK(read_data_csv(sigma).sigma.has_value());
}
