#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "qdspin/errors.hpp"
#include "qdspin/polarization.hpp"

using namespace qdspin;

namespace {

// Equal up to a global phase.
bool same_state(const JonesVector& a, const JonesVector& b, double tol = 1e-12) {
    return std::abs(std::abs(inner(a, b)) - a.norm() * b.norm()) < tol;
}

constexpr double kDeg = M_PI / 180.0;

}  // namespace

TEST_CASE("waveplates") {
    const JonesVector q = waveplate(WaveplateKind::Quarter, M_PI / 4) * JonesVector::horizontal();
    const bool circular = same_state(q, JonesVector::sigma_plus()) || same_state(q, JonesVector::sigma_minus());
    CHECK(circular);
    for (double theta : {0.1, 0.7, 2.0})
        for (double alpha : {0.0, 0.3, 1.1}) {
            const JonesVector out = waveplate(WaveplateKind::Half, theta) * JonesVector::linear(alpha);
            CHECK(same_state(out, JonesVector::linear(2 * theta - alpha)));
            const JonesMatrix twice = waveplate(WaveplateKind::Half, theta) * waveplate(WaveplateKind::Half, theta);
            CHECK(same_state(twice * JonesVector::linear(alpha), JonesVector::linear(alpha)));
        }
    for (auto kind : {WaveplateKind::Half, WaveplateKind::Quarter})
        for (double t : {0.0, 0.4, 1.3, 3.0})
            CHECK(waveplate(kind, t).unitarity_defect() < 1e-12);
}

TEST_CASE("far field to local") {
    const JonesVector h = JonesVector::horizontal();
    CHECK(same_state(far_field_to_local(h, {0, 0}, JonesMatrix::identity()), h));
    const Stokes s = stokes(far_field_to_local(h, {0, M_PI / 4}, JonesMatrix::identity()));
    CHECK(std::abs(s.s3) == doctest::Approx(1.0).epsilon(1e-12));
    const JonesMatrix t = default_transfer_matrix();
    CHECK(t.condition_number() == doctest::Approx(2.0).epsilon(1e-9));
    for (double a : {0.0, 0.5, 1.0, 2.5})
        CHECK(far_field_to_local(JonesVector::linear(a), {a, 2 * a}, t).norm() <= t.largest_singular_value() + 1e-12);
}

TEST_CASE("excitation rates") {
    ExcitationRates r = excitation_rates(JonesVector::sigma_plus(), 0.0);
    CHECK(r.r_plus == doctest::Approx(1.0));
    CHECK(r.r_minus == doctest::Approx(0.0));
    r = excitation_rates(JonesVector::horizontal(), 0.0);
    CHECK(r.r_plus == doctest::Approx(0.5));
    CHECK(r.r_minus == doctest::Approx(0.5));
    r = excitation_rates(JonesVector::sigma_plus(), 0.316);
    CHECK(r.r_plus / r.r_minus == doctest::Approx(1.0 / (0.316 * 0.316)).epsilon(1e-12));
    // global phase invariance
    const JonesVector e = JonesVector::linear(0.3) + cplx(0, 0.4) * JonesVector::linear(1.2);
    const ExcitationRates a = excitation_rates(e, 0.2), b = excitation_rates(std::polar(1.0, 0.77) * e, 0.2);
    CHECK(a.r_plus / a.r_minus == doctest::Approx(b.r_plus / b.r_minus).epsilon(1e-12));
}

TEST_CASE("scan: brute force optimum and ratio floor") {
    const JonesVector e0 = JonesVector::horizontal();
    const ContrastMap clean = contrast_scan(e0, JonesMatrix::identity(), 0.0, kDeg);
    CHECK(clean.entries.size() == 180u * 180u);
    const OptimalSetting best_p = optimal_setting(clean, ContrastTarget::MaximizeRplus);
    const OptimalSetting best_m = optimal_setting(clean, ContrastTarget::MaximizeRminus);
    CHECK(clean.entries[best_p.index].r_minus < 1e-6 * clean.entries[best_p.index].r_plus);
    CHECK(best_p.index != best_m.index);
    const Stokes sp = stokes(far_field_to_local(e0, best_p.setting, JonesMatrix::identity()));
    const Stokes sm = stokes(far_field_to_local(e0, best_m.setting, JonesMatrix::identity()));
    CHECK(sp.s3 == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(sm.s3 == doctest::Approx(-1.0).epsilon(1e-6));

    // brute-force argmax from the raw entries
    double best = 0.0;
    for (const auto& e : clean.entries) best = std::max(best, e.ratio);
    CHECK(best_p.ratio == best);

    const ContrastMap eps = contrast_scan(e0, JonesMatrix::identity(), 0.316, kDeg);
    const double r = optimal_setting(eps, ContrastTarget::MaximizeRplus).ratio;
    CHECK(r == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("scan symmetry and invariances") {
    const JonesVector e0 = JonesVector::linear(0.2);
    const JonesMatrix t = default_transfer_matrix();
    const ContrastMap a = contrast_scan(e0, t, 0.316, 2 * kDeg);
    const ContrastMap b = contrast_scan(e0, t, 0.316, 2 * kDeg, PlateOrder::HalfThenQuarter, 1, M_PI / 2);
    std::vector<double> ra, rb;
    for (const auto& e : a.entries) ra.push_back(e.ratio);
    for (const auto& e : b.entries) rb.push_back(e.ratio);
    std::sort(ra.begin(), ra.end());
    std::sort(rb.begin(), rb.end());
    REQUIRE(ra.size() == rb.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) worst = std::max(worst, std::abs(ra[i] - rb[i]) / ra[i]);
    CHECK(worst < 1e-9);

    JonesMatrix scaled = t;
    scaled.m *= cplx(0.3, -2.0);
    const ContrastMap c = contrast_scan(e0, scaled, 0.316, 2 * kDeg);
    CHECK(optimal_setting(c, ContrastTarget::MaximizeRplus).index ==
          optimal_setting(a, ContrastTarget::MaximizeRplus).index);
    for (std::size_t i = 0; i < a.entries.size(); i += 97)
        CHECK(c.entries[i].ratio == doctest::Approx(a.entries[i].ratio).epsilon(1e-12));

    // thread count does not change the map
    const ContrastMap par = contrast_scan(e0, t, 0.316, 2 * kDeg, PlateOrder::HalfThenQuarter, 4);
    for (std::size_t i = 0; i < a.entries.size(); ++i) REQUIRE(par.entries[i].ratio == a.entries[i].ratio);
}

TEST_CASE("default transfer: elliptic optima") {
    const ContrastMap m = contrast_scan(JonesVector::horizontal(), default_transfer_matrix(), 0.316, kDeg);
    for (auto target : {ContrastTarget::MaximizeRplus, ContrastTarget::MaximizeRminus}) {
        const OptimalSetting o = optimal_setting(m, target);
        CHECK(o.ratio == doctest::Approx(10.0).epsilon(0.05));
        const Stokes s = stokes(far_field_to_local(JonesVector::horizontal(), o.setting, JonesMatrix::identity()));
        CHECK(std::abs(s.s3) > 0.05);
        CHECK(std::abs(s.s3) < 0.95);
    }
}

TEST_CASE("scan preconditions") {
    CHECK_THROWS_AS(contrast_scan(JonesVector::horizontal(), JonesMatrix::identity(), 0.0, 0.7 * kDeg), DomainError);
    CHECK_THROWS_AS(optimal_setting(ContrastMap{}, ContrastTarget::MaximizeRplus), DomainError);
    ContrastMap one;
    one.entries.push_back({{0.1, 0.2}, 0.6, 0.2, 3.0, false});
    CHECK(optimal_setting(one, ContrastTarget::MaximizeRplus).index == 0u);
}
