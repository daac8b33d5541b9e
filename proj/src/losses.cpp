#include "cfc/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cfc::losses {

namespace {

double clamp_prob(double p, double eps) { return std::min(1.0 - eps, std::max(eps, p)); }

void check_nonempty(const std::vector<double>& v, const char* who) {
    if (v.empty()) throw std::invalid_argument(std::string(who) + ": empty batch");
}

} // namespace

double uv_loss(const uvgeom::UVField& predicted, const uvgeom::UVField& target_mean) {
    if (!predicted.coords.same_shape(target_mean.coords))
        throw std::invalid_argument("uv_loss: size mismatch");
    int H = predicted.height(), W = predicted.width();
    double acc = 0;
    int64_t n = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (predicted.valid.at2(y, x) == 0.0 || target_mean.valid.at2(y, x) == 0.0) continue;
            acc += std::fabs(predicted.coords.at3(0, y, x) - target_mean.coords.at3(0, y, x));
            acc += std::fabs(predicted.coords.at3(1, y, x) - target_mean.coords.at3(1, y, x));
            ++n;
        }
    if (n == 0) throw std::invalid_argument("uv_loss: disjoint valid masks");
    return acc / static_cast<double>(2 * n);
}

double gt_adversarial_loss(const std::vector<double>& d_out, double eps) {
    check_nonempty(d_out, "gt_adversarial_loss");
    double acc = 0;
    for (double d : d_out) acc += -std::log(clamp_prob(d, eps));
    return acc / d_out.size();
}

double dt_loss(const std::vector<double>& d_fake, const std::vector<double>& d_real, double eps) {
    check_nonempty(d_fake, "dt_loss");
    if (d_fake.size() != d_real.size()) throw std::invalid_argument("dt_loss: batch size mismatch");
    double acc = 0;
    for (size_t i = 0; i < d_fake.size(); ++i)
        acc += -std::log(clamp_prob(1.0 - d_fake[i], eps)) - std::log(clamp_prob(d_real[i], eps));
    return acc / d_fake.size();
}

double gf_adversarial_loss(const std::vector<double>& d_low, const std::vector<double>& d_high,
                           double lambda, double eps) {
    check_nonempty(d_low, "gf_adversarial_loss");
    if (d_low.size() != d_high.size())
        throw std::invalid_argument("gf_adversarial_loss: batch size mismatch");
    double acc = 0;
    for (size_t i = 0; i < d_low.size(); ++i)
        acc += -std::log(clamp_prob(d_low[i], eps)) - lambda * std::log(clamp_prob(d_high[i], eps));
    return acc / d_low.size();
}

double df_loss(const std::vector<double>& d_low_real, const std::vector<double>& d_low_fake,
               const std::vector<double>& d_high_real, const std::vector<double>& d_high_fake,
               double eps) {
    auto band = [eps](const std::vector<double>& real, const std::vector<double>& fake) {
        check_nonempty(real, "df_loss");
        if (real.size() != fake.size())
            throw std::invalid_argument("df_loss: batch size mismatch");
        double acc = 0;
        for (size_t i = 0; i < real.size(); ++i)
            acc += -std::log(clamp_prob(real[i], eps)) - std::log(clamp_prob(1.0 - fake[i], eps));
        return acc / real.size();
    };
    return band(d_low_real, d_low_fake) + band(d_high_real, d_high_fake);
}

double perceptual_loss(const Tensor& embed_x, const Tensor& embed_fx) {
    if (!embed_x.same_shape(embed_fx))
        throw std::invalid_argument("perceptual_loss: embedding size mismatch");
    double acc = 0;
    for (size_t i = 0; i < embed_x.data.size(); ++i) {
        double d = embed_x.data[i] - embed_fx.data[i];
        acc += d * d;
    }
    return acc;
}

double perceptual_loss(const nets::Model& m, const Tensor& x, const Tensor& fx) {
    return perceptual_loss(m.embed(x), m.embed(fx));
}

double pixel_loss(const Tensor& x, const Tensor& fx, double alpha) {
    if (!x.same_shape(fx)) throw std::invalid_argument("pixel_loss: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < x.data.size(); ++i) acc += std::fabs(x.data[i] - fx.data[i]);
    return alpha * acc / static_cast<double>(x.data.size());
}

double total_generator_loss(double uv, double g_t, double g_f, double perceptual, double pixel) {
    return uv + g_t + g_f + perceptual + pixel;
}

// ------------------------------------------------------------- Var variants

ad::Var neg_log_prob(const ad::Var& p, double eps) {
    return ad::scale(ad::log(ad::clamp(p, eps, 1.0 - eps)), -1.0);
}

ad::Var neg_log_one_minus(const ad::Var& p, double eps) {
    ad::Var one_minus = ad::add_scalar(ad::scale(p, -1.0), 1.0);
    return ad::scale(ad::log(ad::clamp(one_minus, eps, 1.0 - eps)), -1.0);
}

ad::Var masked_mean_abs(const ad::Var& a, const Tensor& b, const Tensor& mask) {
    if (!a->value.same_shape(b)) throw std::invalid_argument("masked_mean_abs: shape mismatch");
    double count = mask.sum();
    if (count == 0.0) throw std::invalid_argument("masked_mean_abs: empty mask");
    // broadcast [H,W] mask over channels of [C,H,W]
    Tensor full(a->value.shape);
    if (mask.same_shape(a->value)) {
        full = mask;
    } else {
        int C = a->value.shape[0];
        size_t hw = mask.data.size();
        if (static_cast<int64_t>(hw) * C != a->value.numel())
            throw std::invalid_argument("masked_mean_abs: mask shape mismatch");
        for (int c = 0; c < C; ++c)
            std::copy(mask.data.begin(), mask.data.end(), full.data.begin() + c * hw);
        count *= C;
    }
    ad::Var diff = ad::abs(ad::sub(a, ad::constant(b)));
    return ad::scale(ad::sum(ad::mul_const(diff, full)), 1.0 / count);
}

ad::Var squared_distance(const ad::Var& a, const Tensor& b) {
    return ad::sum(ad::square(ad::sub(a, ad::constant(b))));
}

ad::Var mask_bce(const ad::Var& logits, const Tensor& target) {
    // numerically safe formulation: max(z,0) - z*t + log(1 + exp(-|z|)),
    // composed from sigmoid + clamped logs
    ad::Var p = ad::sigmoid(logits);
    Tensor t = target;
    t.shape = logits->value.shape;
    Tensor one_minus_t = t;
    for (double& v : one_minus_t.data) v = 1.0 - v;
    ad::Var term_pos = ad::mul_const(neg_log_prob(p), t);
    ad::Var term_neg = ad::mul_const(neg_log_one_minus(p), one_minus_t);
    return ad::mean(ad::add(term_pos, term_neg));
}

} // namespace cfc::losses
