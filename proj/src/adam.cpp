#include "dlaseg/adam.hpp"

#include <cmath>

namespace dlaseg {

Adam::Adam(std::vector<NamedParam> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.learning_rate <= 0) throw ContractError("learning rate must be positive");
    for (const auto& np : params_) {
        m_.emplace_back(np.param->value.size(), 0.0);
        v_.emplace_back(np.param->value.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        auto& w = params_[p].param->value.data;
        auto& g = params_[p].param->grad.data;
        if (w.size() != g.size() || w.size() != m_[p].size())
            throw ShapeError("adam: parameter/gradient size mismatch for " + params_[p].name);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g[i];
            v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }
}

}  // namespace dlaseg
