#include "alt/grad_check.hpp"

#include <cmath>
#include <cstring>

namespace alt {

namespace {

template <class Real>
double rel_err(Real analytic, Real numeric) {
    const double a = static_cast<double>(analytic);
    const double n = static_cast<double>(numeric);
    const double denom = std::max({std::fabs(a), std::fabs(n), 1e-12});
    return std::fabs(a - n) / denom;
}

template <class Real>
Real eval_scalar(const std::function<Tensor<Real>()>& f) {
    NoGradGuard<Real> ng;
    Tensor<Real> y = f();
    if (!y.is_scalar()) throw ContractError("grad_check: f must return a scalar");
    return y.at(0);
}

}  // namespace

template <class Real>
GradCheckReport grad_check(const std::function<Tensor<Real>()>& f,
                           const std::vector<std::pair<std::string, Tensor<Real>>>& params,
                           Real eps, double tolerance) {
    if (!(eps > Real(0)) || eps > Real(1e-2))
        throw ParameterError("grad_check: eps must lie in (0, 1e-2]");

    // determinism contract: two evaluations must agree bit for bit
    {
        const Real y1 = eval_scalar(f);
        const Real y2 = eval_scalar(f);
        if (std::memcmp(&y1, &y2, sizeof(Real)) != 0)
            throw ContractError("grad_check: f is not deterministic (fix the seed)");
    }

    // handles share storage with the caller's tensors; copying them here keeps
    // the interface const while still letting the checker nudge coordinates
    auto ps = params;

    // analytic pass
    for (auto& [name, p] : ps) p.zero_grad();
    Tape<Real>::current().clear();
    Tensor<Real> y = f();
    if (!y.is_scalar()) throw ContractError("grad_check: f must return a scalar");
    backward(y);

    std::vector<std::vector<Real>> analytic;
    analytic.reserve(ps.size());
    for (auto& [name, p] : ps) analytic.push_back(p.grad());

    GradCheckReport report;
    report.epsilon = static_cast<double>(eps);
    report.tolerance = tolerance;

    double total = 0.0;
    size_t count = 0;
    for (size_t pi = 0; pi < ps.size(); ++pi) {
        Tensor<Real>& p = ps[pi].second;
        GradCheckReport::PerParam pp;
        pp.name = ps[pi].first;
        double psum = 0.0;
        for (size_t i = 0; i < p.size(); ++i) {
            const Real saved = p.values()[i];
            p.values()[i] = saved + eps;
            const Real up = eval_scalar(f);
            p.values()[i] = saved - eps;
            const Real down = eval_scalar(f);
            p.values()[i] = saved;
            const Real numeric =
                static_cast<Real>((static_cast<double>(up) - static_cast<double>(down)) /
                                  (2.0 * static_cast<double>(eps)));
            const double e = rel_err(analytic[pi][i], numeric);
            pp.max_rel_err = std::max(pp.max_rel_err, e);
            psum += e;
        }
        pp.mean_rel_err = p.size() ? psum / static_cast<double>(p.size()) : 0.0;
        report.max_rel_err = std::max(report.max_rel_err, pp.max_rel_err);
        total += psum;
        count += p.size();
        report.params.push_back(std::move(pp));
    }
    report.mean_rel_err = count ? total / static_cast<double>(count) : 0.0;
    report.pass = report.max_rel_err < tolerance;
    return report;
}

template GradCheckReport grad_check(const std::function<Tensor<float>()>&,
                                    const std::vector<std::pair<std::string, Tensor<float>>>&,
                                    float, double);
template GradCheckReport grad_check(const std::function<Tensor<double>()>&,
                                    const std::vector<std::pair<std::string, Tensor<double>>>&,
                                    double, double);

}  // namespace alt
