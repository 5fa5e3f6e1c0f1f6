#include "qdspin/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "qdspin/errors.hpp"
#include "qdspin/parallel.hpp"
#include "qdspin/svg.hpp"

namespace qdspin {

namespace {

Eigen::Matrix2cd rotation(double a) {
    Eigen::Matrix2cd r;
    r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
    return r;
}

double reduce_angle(double a) {
    double r = std::fmod(a, kPi);
    if (r < 0.0) r += kPi;
    if (r >= kPi) r -= kPi;
    return r;
}

}  // namespace

JonesMatrix waveplate(WaveplateKind kind, double fast_axis_angle) {
    const double retardance = kind == WaveplateKind::Half ? kPi : kPi / 2.0;
    Eigen::Matrix2cd d = Eigen::Matrix2cd::Zero();
    d(0, 0) = 1.0;
    d(1, 1) = std::exp(cplx{0.0, retardance});
    return {rotation(fast_axis_angle) * d * rotation(-fast_axis_angle)};
}

WaveplateSetting WaveplateSetting::reduced(double hwp, double qwp) {
    return {reduce_angle(hwp), reduce_angle(qwp)};
}

JonesVector far_field_to_local(const JonesVector& e0, const WaveplateSetting& setting,
                               const JonesMatrix& transfer, PlateOrder order) {
    const JonesMatrix hwp = waveplate(WaveplateKind::Half, setting.hwp_angle);
    const JonesMatrix qwp = waveplate(WaveplateKind::Quarter, setting.qwp_angle);
    const JonesMatrix chain = order == PlateOrder::HalfThenQuarter ? transfer * qwp * hwp
                                                                   : transfer * hwp * qwp;
    return chain * e0;
}

ExcitationRates excitation_rates(const JonesVector& field, double impurity) {
    if (!(impurity >= 0.0 && impurity < 0.5))
        throw DomainError("dipole impurity must lie in [0, 0.5)");
    const double eps2 = impurity * impurity;
    const double p = std::norm(inner(JonesVector::sigma_plus(), field));
    const double m = std::norm(inner(JonesVector::sigma_minus(), field));
    return {(p + eps2 * m) / (1.0 + eps2), (m + eps2 * p) / (1.0 + eps2)};
}

std::pair<double, bool> floored_ratio(double numerator, double denominator) {
    const double floor = kRatioFloor * numerator;
    if (denominator < floor || denominator == 0.0) {
        if (numerator == 0.0) return {0.0, true};
        return {numerator / floor, true};
    }
    return {numerator / denominator, false};
}

ContrastMap contrast_scan(const JonesVector& e0, const JonesMatrix& transfer, double impurity,
                          double grid_step, PlateOrder order, unsigned threads, double hwp_offset) {
    if (!(grid_step > 0.0)) throw DomainError("grid_step must be > 0");
    const double n_real = kPi / grid_step;
    const double n_round = std::round(n_real);
    if (n_round < 1.0 || std::abs(n_real - n_round) > 1e-9 * n_real)
        throw DomainError(fmt::format("grid_step {:.9g} rad does not divide pi", grid_step));
    if (!(impurity >= 0.0 && impurity < 0.5))
        throw DomainError("dipole impurity must lie in [0, 0.5)");

    const auto n = static_cast<std::size_t>(n_round);
    ContrastMap map;
    map.hwp_steps = n;
    map.qwp_steps = n;
    map.grid_step = grid_step;
    map.entries.resize(n * n);
    const JonesVector input = e0.normalized();

    parallel_for(n, threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n; ++j) {
            ContrastEntry& e = map.entries[i * n + j];
            e.setting = WaveplateSetting::reduced(static_cast<double>(i) * grid_step + hwp_offset,
                                                  static_cast<double>(j) * grid_step);
            const ExcitationRates r =
                excitation_rates(far_field_to_local(input, e.setting, transfer, order), impurity);
            e.r_plus = r.r_plus;
            e.r_minus = r.r_minus;
            std::tie(e.ratio, e.floored) = floored_ratio(r.r_plus, r.r_minus);
        }
    });
    return map;
}

OptimalSetting optimal_setting(const ContrastMap& map, ContrastTarget target) {
    if (map.entries.empty()) throw DomainError("contrast map is empty");
    OptimalSetting best;
    best.ratio = -1.0;
    for (std::size_t k = 0; k < map.entries.size(); ++k) {
        const ContrastEntry& e = map.entries[k];
        const double r = target == ContrastTarget::MaximizeRplus
                             ? e.ratio
                             : floored_ratio(e.r_minus, e.r_plus).first;
        const bool earlier = r == best.ratio &&
                             std::pair(e.setting.hwp_angle, e.setting.qwp_angle) <
                                 std::pair(best.setting.hwp_angle, best.setting.qwp_angle);
        if (r > best.ratio || earlier) {
            best.ratio = r;
            best.setting = e.setting;
            best.index = k;
        }
    }
    return best;
}

JonesMatrix default_transfer_matrix() {
    const double axis = 20.0 * kPi / 180.0;
    Eigen::Matrix2cd d = Eigen::Matrix2cd::Zero();
    d(0, 0) = 1.0;
    d(1, 1) = 0.5 * std::exp(cplx{0.0, 30.0 * kPi / 180.0});
    return {rotation(axis) * d * rotation(-axis)};
}

void write_contrast_csv(const ContrastMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "hwp_deg,qwp_deg,r_plus,r_minus,ratio\n";
    for (const auto& e : map.entries)
        out << fmt::format("{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n",
                           e.setting.hwp_angle * 180.0 / kPi, e.setting.qwp_angle * 180.0 / kPi,
                           e.r_plus, e.r_minus, e.ratio);
}

void write_contrast_svg(const ContrastMap& map, const std::string& path) {
    std::vector<double> values;
    values.reserve(map.entries.size());
    for (const auto& e : map.entries) values.push_back(std::log10(std::max(e.ratio, 1e-300)));
    write_heatmap_svg(path, values, map.hwp_steps, map.qwp_steps, "qwp angle", "hwp angle",
                      "log10(R+/R-)");
}

}  // namespace qdspin
