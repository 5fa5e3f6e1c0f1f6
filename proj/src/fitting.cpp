#include "qdspin/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "qdspin/constants.hpp"
#include "qdspin/errors.hpp"

namespace qdspin {

void DataSeries::validate() const {
    if (x.size() != y.size()) throw DomainError("x and y lengths differ");
    if (sigma && sigma->size() != x.size()) throw DomainError("sigma length differs from x");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1])) throw DomainError("x must be strictly increasing");
    if (sigma)
        for (double s : *sigma)
            if (!(s > 0.0)) throw DomainError("sigma must be > 0");
}

double FitResult::param(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return params[i];
    throw std::out_of_range("no parameter named " + name);
}

double FitResult::uncertainty(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return uncertainties[i];
    throw std::out_of_range("no parameter named " + name);
}

namespace {

struct Problem {
    const FitModel& model;
    const DataSeries& data;
    std::vector<int> free;  // indices of free parameters

    double weight(std::size_t i) const { return data.sigma ? 1.0 / (*data.sigma)[i] : 1.0; }

    Eigen::VectorXd residuals(const std::vector<double>& p) const {
        Eigen::VectorXd r(data.size());
        for (std::size_t i = 0; i < data.size(); ++i)
            r(static_cast<Eigen::Index>(i)) = (data.y[i] - model.eval(p, data.x[i])) * weight(i);
        return r;
    }

    // d(model)/dp, weighted; columns follow `free`.
    Eigen::MatrixXd jacobian(const std::vector<double>& p) const {
        const auto n = static_cast<Eigen::Index>(data.size());
        Eigen::MatrixXd j(n, static_cast<Eigen::Index>(free.size()));
        std::vector<double> base(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) base[i] = model.eval(p, data.x[i]);
        for (std::size_t c = 0; c < free.size(); ++c) {
            const int k = free[c];
            std::vector<double> q = p;
            const double h = 1e-6 * (p[k] != 0.0 ? std::abs(p[k]) : 1.0);
            q[k] += h;
            const double hh = q[k] - p[k];
            for (std::size_t i = 0; i < data.size(); ++i)
                j(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                    (model.eval(q, data.x[i]) - base[i]) / hh * weight(i);
        }
        return j;
    }
};

double condition_of(const Eigen::MatrixXd& a) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return std::numeric_limits<double>::infinity();
    const double smin = s(s.size() - 1);
    if (smin <= 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

double wrap_phase(double phi) {
    double r = std::remainder(phi, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

}  // namespace

FitResult lm_fit(const FitModel& model, const DataSeries& data, std::vector<double> p,
                 const FitOptions& options) {
    data.validate();
    const std::size_t np = model.param_names.size();
    if (p.size() != np) throw DomainError("initial parameter count does not match the model");
    Problem prob{model, data, {}};
    for (std::size_t k = 0; k < np; ++k)
        if (options.fixed.empty() || !options.fixed.at(k)) prob.free.push_back(static_cast<int>(k));
    const std::size_t nf = prob.free.size();
    if (data.size() < np || data.size() < nf || nf == 0)
        throw DomainError("not enough data points for the number of parameters");

    FitResult res;
    res.model = model.name;
    res.names = model.param_names;
    res.points = data.size();

    Eigen::VectorXd r = prob.residuals(p);
    double cost = r.squaredNorm();
    if (!std::isfinite(cost)) throw DomainError("initial parameters give a non-finite cost");
    double lambda = options.lambda0;
    Eigen::MatrixXd jac = prob.jacobian(p);
    const auto nfi = static_cast<Eigen::Index>(nf);

    int it = 0;
    for (; it < options.max_iter; ++it) {
        const Eigen::MatrixXd a = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        if (it == 0) {
            const double cond = condition_of(a);
            if (!std::isfinite(cond) || cond > 1e16)
                throw FitError(fmt::format("singular normal equations (condition number {:.3g})", cond),
                               cond);
        }
        if (cost == 0.0 || g.cwiseAbs().maxCoeff() < options.tol) {
            res.converged = true;
            break;
        }
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd damped = a;
            for (Eigen::Index k = 0; k < nfi; ++k)
                damped(k, k) += lambda * std::max(a(k, k), 1e-300);
            const Eigen::VectorXd step = damped.ldlt().solve(g);
            std::vector<double> trial = p;
            for (std::size_t c = 0; c < nf; ++c) trial[prob.free[c]] += step(static_cast<Eigen::Index>(c));
            const Eigen::VectorXd rt = prob.residuals(trial);
            const double ct = rt.squaredNorm();
            if (std::isfinite(ct) && ct <= cost) {
                const double decrease = (cost - ct) / std::max(cost, 1e-300);
                double rel_step = 0.0;
                for (std::size_t c = 0; c < nf; ++c) {
                    const int k = prob.free[c];
                    rel_step = std::max(rel_step, std::abs(step(static_cast<Eigen::Index>(c))) /
                                                      (std::abs(p[k]) + 1e-12));
                }
                p = std::move(trial);
                r = rt;
                cost = ct;
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (decrease < options.tol && rel_step < std::sqrt(options.tol)) res.converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) break;
            }
        }
        if (!accepted) {
            // No downhill step at any damping: stationary to working precision.
            res.converged = g.cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, cost);
            break;
        }
        if (res.converged) {
            ++it;
            break;
        }
        jac = prob.jacobian(p);
    }
    res.iterations = it;
    res.params = p;
    res.cost = cost;
    const double dof = static_cast<double>(data.size() - nf);
    res.chi2_reduced = dof > 0 ? cost / dof : std::numeric_limits<double>::quiet_NaN();

    jac = prob.jacobian(p);
    const Eigen::MatrixXd a = jac.transpose() * jac;
    Eigen::MatrixXd inv = a.completeOrthogonalDecomposition().pseudoInverse();
    if (!data.sigma && dof > 0) inv *= res.chi2_reduced;
    inv = 0.5 * (inv + inv.transpose());
    const auto npi = static_cast<Eigen::Index>(np);
    res.covariance = Eigen::MatrixXd::Zero(npi, npi);
    for (std::size_t a1 = 0; a1 < nf; ++a1)
        for (std::size_t b1 = 0; b1 < nf; ++b1)
            res.covariance(prob.free[a1], prob.free[b1]) =
                inv(static_cast<Eigen::Index>(a1), static_cast<Eigen::Index>(b1));
    res.uncertainties.resize(np);
    for (std::size_t k = 0; k < np; ++k)
        res.uncertainties[k] = std::sqrt(std::max(0.0, res.covariance(static_cast<Eigen::Index>(k),
                                                                        static_cast<Eigen::Index>(k))));
    return res;
}

double model_gauss_cosine(const GaussCosineParams& p, double tau) {
    const double e = tau / p.dephasing_time;
    return p.amplitude * std::cos(p.angular_frequency * tau + p.phase) * std::exp(-e * e) + p.offset;
}

double model_rabi_power(double amplitude, double coefficient, double power_uw) {
    const double s = std::sin(0.5 * coefficient * std::sqrt(std::max(0.0, power_uw)));
    return amplitude * s * s;
}

FitModel gauss_cosine_model() {
    return {"gauss_cosine",
            {"A", "omega_L", "phi", "T2star", "B"},
            [](std::span<const double> p, double x) {
                return model_gauss_cosine({p[0], p[1], p[2], p[3], p[4]}, x);
            }};
}

FitModel gauss_cosine_free_exponent_model() {
    return {"gauss_cosine_free_exponent",
            {"A", "omega_L", "phi", "T2star", "B", "exponent"},
            [](std::span<const double> p, double x) {
                const double e = std::abs(x / p[3]);
                return p[0] * std::cos(p[1] * x + p[2]) * std::exp(-std::pow(e, p[5])) + p[4];
            }};
}

FitModel rabi_power_model() {
    return {"rabi_power", {"amplitude", "a"}, [](std::span<const double> p, double x) {
                return model_rabi_power(p[0], p[1], x);
            }};
}

FitModel linear_model() {
    return {"linear", {"slope", "intercept"},
            [](std::span<const double> p, double x) { return p[0] * x + p[1]; }};
}

std::vector<std::string> model_names() { return {"gauss_cosine", "rabi_power"}; }

FitModel model_by_name(const std::string& name) {
    if (name == "gauss_cosine") return gauss_cosine_model();
    if (name == "rabi_power") return rabi_power_model();
    if (name == "gauss_cosine_free_exponent") return gauss_cosine_free_exponent_model();
    if (name == "linear") return linear_model();
    throw DomainError("unknown model '" + name + "' (valid: gauss_cosine, rabi_power)");
}

double dominant_angular_frequency(const DataSeries& data) {
    const std::size_t n = data.size();
    if (n < 4) throw DomainError("need at least 4 points to locate a frequency");
    const double mean = std::accumulate(data.y.begin(), data.y.end(), 0.0) / static_cast<double>(n);
    const double span = data.x.back() - data.x.front();
    const double nyquist = kPi * static_cast<double>(n - 1) / span;
    const std::size_t m = 8 * n;
    std::vector<double> power(m + 1);
    for (std::size_t k = 0; k <= m; ++k) {
        const double w = nyquist * static_cast<double>(k) / static_cast<double>(m);
        cplx s{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i)
            s += (data.y[i] - mean) * std::exp(cplx{0.0, -w * (data.x[i] - data.x.front())});
        power[k] = std::norm(s);
    }
    std::size_t best = 1;
    for (std::size_t k = 1; k <= m; ++k)
        if (power[k] > power[best]) best = k;
    double shift = 0.0;
    if (best > 0 && best < m) {
        const double a = power[best - 1], b = power[best], c = power[best + 1];
        const double denom = a - 2.0 * b + c;
        if (denom != 0.0) shift = 0.5 * (a - c) / denom;
    }
    return nyquist * (static_cast<double>(best) + shift) / static_cast<double>(m);
}

FitResult fit_gauss_cosine(const DataSeries& input, const GaussCosineFitOptions& options) {
    input.validate();
    DataSeries data = input;
    const double mean =
        std::accumulate(data.y.begin(), data.y.end(), 0.0) / static_cast<double>(data.size());
    if (options.background_subtract)
        for (double& v : data.y) v -= mean;

    const double omega0 = dominant_angular_frequency(data);
    const double m0 = options.background_subtract ? 0.0 : mean;
    cplx s{0.0, 0.0};
    double amp0 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        s += (data.y[i] - m0) * std::exp(cplx{0.0, -omega0 * data.x[i]});
        amp0 = std::max(amp0, std::abs(data.y[i] - m0));
    }
    const double phi0 = std::arg(s);
    const double span = data.x.back() - data.x.front();

    const FitModel model =
        options.free_exponent ? gauss_cosine_free_exponent_model() : gauss_cosine_model();
    FitOptions lm = options.lm;
    if (lm.fixed.empty()) {
        lm.fixed.assign(model.param_names.size(), false);
        lm.fixed[4] = options.background_subtract;
    }

    std::optional<FitResult> best;
    for (double t2_scale : {0.5, 1.0, 0.25, 2.0}) {
        std::vector<double> p0 = {amp0, omega0, phi0, t2_scale * span + data.x.front(), m0};
        if (options.free_exponent) p0.push_back(2.0);
        try {
            FitResult r = lm_fit(model, data, p0, lm);
            if (!best || (r.converged && !best->converged) ||
                (r.converged == best->converged && r.cost < best->cost))
                best = std::move(r);
        } catch (const FitError&) {
            if (t2_scale == 2.0 && !best) throw;
        }
    }
    FitResult fit = std::move(*best);
    if (fit.params[0] < 0.0) {
        fit.params[0] = -fit.params[0];
        fit.params[2] += kPi;
        fit.covariance.row(0) *= -1.0;
        fit.covariance.col(0) *= -1.0;
    }
    if (fit.params[1] < 0.0) {
        // cos is even: flip frequency and phase together.
        fit.params[1] = -fit.params[1];
        fit.params[2] = -fit.params[2];
        for (int k : {1, 2}) {
            fit.covariance.row(k) *= -1.0;
            fit.covariance.col(k) *= -1.0;
        }
    }
    fit.params[2] = wrap_phase(fit.params[2]);
    fit.params[3] = std::abs(fit.params[3]);
    return fit;
}

GaussCosineParams gauss_cosine_params(const FitResult& fit) {
    return {fit.params.at(0), fit.params.at(1), fit.params.at(2), fit.params.at(3), fit.params.at(4)};
}

FitResult fit_rabi_power(const DataSeries& data, const FitOptions& options) {
    data.validate();
    std::size_t imax = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data.y[i] > data.y[imax]) imax = i;
    const double amp0 = data.y[imax];
    const double p_peak = std::max(data.x[imax], 1e-12);
    // First maximum of sin^2(a sqrt(P)/2) is at a sqrt(P) = pi.
    const double a0 = kPi / std::sqrt(p_peak);
    FitResult fit = lm_fit(rabi_power_model(), data, {amp0, a0}, options);
    fit.params[1] = std::abs(fit.params[1]);
    return fit;
}

double extract_g_factor(double larmor_ghz, double field_tesla) {
    if (!(field_tesla > 0.0)) throw DomainError("field must be > 0 to extract a g-factor");
    return larmor_ghz / (kBohrMagnetonGHzPerTesla * field_tesla);
}

DataSeries read_data_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path, 0);
    DataSeries d;
    std::string line;
    std::size_t row = 0;
    std::size_t columns = 0;
    if (!std::getline(in, line)) throw CsvError("empty CSV file " + path, 1);
    ++row;  // header
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                throw CsvError(fmt::format("{}: row {}: cannot parse '{}' as a number", path, row, cell),
                               row);
            }
            if (cell.find_first_not_of(" \t", used) != std::string::npos)
                throw CsvError(fmt::format("{}: row {}: trailing characters in '{}'", path, row, cell),
                               row);
            vals.push_back(v);
        }
        if (vals.size() != 2 && vals.size() != 3)
            throw CsvError(fmt::format("{}: row {}: expected 2 or 3 columns, got {}", path, row,
                                       vals.size()),
                           row);
        if (columns == 0) columns = vals.size();
        if (vals.size() != columns)
            throw CsvError(fmt::format("{}: row {}: column count changed from {} to {}", path, row,
                                       columns, vals.size()),
                           row);
        d.x.push_back(vals[0]);
        d.y.push_back(vals[1]);
        if (columns == 3) {
            if (!d.sigma) d.sigma.emplace();
            d.sigma->push_back(vals[2]);
        }
    }
    if (d.x.empty()) throw CsvError(path + ": no data rows", row);
    try {
        d.validate();
    } catch (const DomainError& e) {
        throw CsvError(path + ": " + e.what(), row);
    }
    return d;
}

void write_data_csv(const DataSeries& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << (data.sigma ? "x,y,sigma\n" : "x,y\n");
    for (std::size_t i = 0; i < data.size(); ++i) {
        out << fmt::format("{:.17g},{:.17g}", data.x[i], data.y[i]);
        if (data.sigma) out << fmt::format(",{:.17g}", (*data.sigma)[i]);
        out << '\n';
    }
}

std::string fit_result_text(const FitResult& fit) {
    std::string s;
    s += fmt::format("model = {}\n", fit.model);
    s += fmt::format("converged = {}\n", fit.converged ? "true" : "false");
    s += fmt::format("iterations = {}\n", fit.iterations);
    s += fmt::format("points = {}\n", fit.points);
    s += fmt::format("cost = {:.17g}\n", fit.cost);
    s += fmt::format("chi2_reduced = {:.17g}\n", fit.chi2_reduced);
    for (std::size_t k = 0; k < fit.names.size(); ++k) {
        s += fmt::format("{} = {:.17g}\n", fit.names[k], fit.params[k]);
        s += fmt::format("{}_err = {:.17g}\n", fit.names[k], fit.uncertainties[k]);
    }
    for (std::size_t a = 0; a < fit.names.size(); ++a)
        for (std::size_t b = a; b < fit.names.size(); ++b)
            s += fmt::format("cov_{}_{} = {:.17g}\n", fit.names[a], fit.names[b],
                             fit.covariance(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)));
    return s;
}

std::string fit_result_csv_header(const FitResult& fit) {
    std::string s = "model,converged,iterations,chi2_reduced";
    for (const auto& n : fit.names) s += "," + n + "," + n + "_err";
    return s;
}

std::string fit_result_csv_row(const FitResult& fit) {
    std::string s = fmt::format("{},{},{},{:.17g}", fit.model, fit.converged ? 1 : 0, fit.iterations,
                                fit.chi2_reduced);
    for (std::size_t k = 0; k < fit.names.size(); ++k)
        s += fmt::format(",{:.17g},{:.17g}", fit.params[k], fit.uncertainties[k]);
    return s;
}

}  // namespace qdspin
