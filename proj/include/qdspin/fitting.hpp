#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdspin {

struct DataSeries {
    std::vector<double> x;
    std::vector<double> y;
    std::optional<std::vector<double>> sigma;

    std::size_t size() const { return x.size(); }
    /// x strictly increasing, equal lengths, sigma > 0.
    void validate() const;
};

/// Parameterized scalar model y = f(p, x).
struct FitModel {
    std::string name;
    std::vector<std::string> param_names;
    std::function<double(std::span<const double>, double)> eval;
};

struct FitOptions {
    int max_iter = 500;
    double lambda0 = 1e-3;
    double tol = 1e-10;
    /// Parameters held at their initial value (empty: all free).
    std::vector<bool> fixed;
};

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> params;
    std::vector<double> uncertainties;
    Eigen::MatrixXd covariance;
    double cost = 0.0;  ///< weighted sum of squared residuals
    double chi2_reduced = 0.0;
    bool converged = false;
    int iterations = 0;
    std::size_t points = 0;

    double param(const std::string& name) const;
    double uncertainty(const std::string& name) const;
};

/// Levenberg-Marquardt with forward-difference Jacobian (relative step 1e-6).
/// Throws FitError when the normal equations are singular; returns
/// converged = false when the iteration budget runs out.
FitResult lm_fit(const FitModel& model, const DataSeries& data, std::vector<double> p0,
                 const FitOptions& options = {});

// --- named models -----------------------------------------------------------

struct GaussCosineParams {
    double amplitude = 1.0;
    double angular_frequency = 0.0;  ///< rad/ns
    double phase = 0.0;
    double dephasing_time = 1.0;  ///< T2*, ns
    double offset = 0.0;
};

/// A cos(w tau + phi) exp(-(tau/T2*)^2) + B.
double model_gauss_cosine(const GaussCosineParams& p, double tau);

/// amplitude * sin^2(a sqrt(P) / 2).
double model_rabi_power(double amplitude, double coefficient, double power_uw);

FitModel gauss_cosine_model();
/// Envelope exp(-(tau/T2*)^n) with n as a sixth parameter (diagnostics).
FitModel gauss_cosine_free_exponent_model();
FitModel rabi_power_model();
FitModel linear_model();

/// Names accepted by model_by_name.
std::vector<std::string> model_names();
FitModel model_by_name(const std::string& name);

/// Peak of the zero-padded periodogram of the mean-removed series, refined
/// by parabolic interpolation. Returns angular frequency (rad per x unit).
double dominant_angular_frequency(const DataSeries& data);

struct GaussCosineFitOptions {
    /// Mean-centre the data and hold B at 0.
    bool background_subtract = false;
    bool free_exponent = false;
    FitOptions lm;
};

/// Gauss-cosine fit with periodogram initialization; A >= 0, phase wrapped
/// to (-pi, pi].
FitResult fit_gauss_cosine(const DataSeries& data, const GaussCosineFitOptions& options = {});

GaussCosineParams gauss_cosine_params(const FitResult& fit);

/// Fit of amplitude * sin^2(a sqrt(P)/2); initial a from the first maximum.
FitResult fit_rabi_power(const DataSeries& data, const FitOptions& options = {});

/// |g| = nu / ((mu_B/h) B).
double extract_g_factor(double larmor_ghz, double field_tesla);

// --- I/O --------------------------------------------------------------------

class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& what, std::size_t row) : std::runtime_error(what), row_(row) {}
    /// 1-based line number in the file.
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Two-column (x,y) or three-column (x,y,sigma) CSV with a one-line header.
DataSeries read_data_csv(const std::string& path);
void write_data_csv(const DataSeries& data, const std::string& path);

/// "key = value" lines.
std::string fit_result_text(const FitResult& fit);
std::string fit_result_csv_header(const FitResult& fit);
std::string fit_result_csv_row(const FitResult& fit);

}  // namespace qdspin
