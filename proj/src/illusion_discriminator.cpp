#include "phantasmagoria/illusion_discriminator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "phantasmagoria/nn/adam.hpp"

namespace phantasmagoria {

// --- solvers ---------------------------------------------------------------

VtsEvaluation IdentityVts::evaluate(const Image& stimulus) const {
  return {stimulus, [](const Image& d) { return d; }};
}

RestoreNetVts::RestoreNetVts(const RestoreNetParams<float>& params) : params_(cast_params<double>(params)) {}

namespace {

Tensor<double> restorenet_input(const Image& stimulus, int channels) {
  if (stimulus.channels() == channels) return to_tensor<double>(stimulus);
  if (stimulus.channels() == 1 && channels == 3) return to_tensor<double>(replicate_to_rgb(stimulus));
  throw std::invalid_argument("restorenet cannot take a " + std::to_string(stimulus.channels()) +
                              "-channel stimulus");
}

}  // namespace

Image RestoreNetVts::respond(const Image& stimulus) const {
  const Image out = to_image(restorenet_forward(params_, restorenet_input(stimulus, params_.shape.channels)), 0);
  return stimulus.channels() == out.channels() ? out : average_channels(out);
}

VtsEvaluation RestoreNetVts::evaluate(const Image& stimulus) const {
  auto trace = std::make_shared<RestoreNetTrace<double>>();
  const Image out =
      to_image(restorenet_forward(params_, restorenet_input(stimulus, params_.shape.channels), trace.get()), 0);
  const bool averaged = stimulus.channels() != out.channels();
  const int c = params_.shape.channels;
  Pullback pb = [this, trace, averaged, c](const Image& dresponse) {
    Image dout = dresponse;
    if (averaged) {
      dout = Image(dresponse.height(), dresponse.width(), c);
      for (int y = 0; y < dresponse.height(); ++y)
        for (int x = 0; x < dresponse.width(); ++x)
          for (int k = 0; k < c; ++k) dout.at(y, x, k) = dresponse.at(y, x) / c;
    }
    const Image dx = to_image(
        restorenet_backward(params_, *trace, to_tensor<double>(dout), static_cast<RestoreNetParams<double>*>(nullptr)),
        0);
    if (!averaged) return dx;
    Image g(dx.height(), dx.width(), 1);
    for (int y = 0; y < dx.height(); ++y)
      for (int x = 0; x < dx.width(); ++x)
        for (int k = 0; k < c; ++k) g.at(y, x) += dx.at(y, x, k);
    return g;
  };
  return {averaged ? average_channels(out) : out, std::move(pb)};
}

OdogVts::OdogVts(std::shared_ptr<const OdogModel> model) : model_(std::move(model)) {}

Image OdogVts::respond(const Image& stimulus) const { return model_->respond(stimulus); }

VtsEvaluation OdogVts::evaluate(const Image& stimulus) const {
  auto trace = std::make_shared<OdogTrace>();
  Image response = model_->respond(stimulus, trace.get());
  auto model = model_;
  return {std::move(response), [model, trace](const Image& d) { return model->pullback(*trace, d); }};
}

// --- restoration training --------------------------------------------------

Image degrade(const Image& clean, const Degradation& d, std::mt19937_64& rng) {
  const int r = d.blur_radius;
  std::vector<double> k(2 * r + 1);
  for (int i = -r; i <= r; ++i) k[i + r] = std::exp(-(i * i) / (2 * d.blur_sigma * d.blur_sigma));
  const double ks = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& v : k) v /= ks;

  const int h = clean.height(), w = clean.width(), ch = clean.channels();
  Image tmp(h, w, ch), out(h, w, ch);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * clean.at(y, std::clamp(x + i, 0, w - 1), c);
        tmp.at(y, x, c) = s;
      }
  std::normal_distribution<double> noise(0.0, d.noise_sigma);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += k[i + r] * tmp.at(std::clamp(y + i, 0, h - 1), x, c);
        out.at(y, x, c) = std::clamp(s + noise(rng), 0.0, 1.0);
      }
  return out;
}

double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("MSE of differently shaped images");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

RestorationResult train_vts_restoration(const std::vector<Image>& clean, const Degradation& degradation,
                                        const RestorationConfig& config, const RestoreNetParams<float>* init) {
  if (clean.empty()) throw std::invalid_argument("restoration training needs at least one image");
  for (const Image& im : clean)
    if (im.channels() != 3 || im.height() != kStimulusSize || im.width() != kStimulusSize)
      throw std::invalid_argument("restoration images must be 128x128x3");

  std::mt19937_64 rng(config.seed);
  RestorationResult result;
  result.params = init ? *init : init_restorenet<float>(RestoreNetShape{}, rng);
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.beta1 = 0.9;
  nn::Adam<RestoreNetParams<float>> adam(result.params, adam_cfg);

  std::vector<std::size_t> order(clean.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Image> inputs, targets;
      for (std::size_t i = start; i < end; ++i) {
        targets.push_back(clean[order[i]]);
        inputs.push_back(degrade(clean[order[i]], degradation, rng));
      }
      const auto x = to_tensor<float>(inputs);
      const auto y = to_tensor<float>(targets);
      RestoreNetTrace<float> trace;
      const auto out = restorenet_forward(result.params, x, &trace);
      Tensor<float> dout(out.n(), out.c(), out.h(), out.w());
      const double inv = 1.0 / static_cast<double>(out.size());
      double loss = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = static_cast<double>(out.data()[i]) - y.data()[i];
        loss += d * d;
        dout.data()[i] = static_cast<float>(2 * d * inv);
      }
      if (!std::isfinite(loss)) throw std::runtime_error("restoration loss became non-finite");
      auto grad = zeros_like(result.params);
      restorenet_backward(result.params, trace, dout, &grad);
      adam.step(result.params, grad);
      total += loss;
      count += out.size();
    }
    result.epoch_loss.push_back(total / static_cast<double>(count));
  }
  return result;
}

// --- quantifiers -----------------------------------------------------------

std::string_view to_string(PqKind kind) {
  switch (kind) {
    case PqKind::lightness: return "lightness";
    case PqKind::color: return "color";
    case PqKind::michelson: return "michelson";
  }
  return "?";
}

std::string_view to_string(PqSign sign) {
  return sign == PqSign::right_minus_left ? "right_minus_left" : "left_minus_right";
}

PqKind parse_pq_kind(std::string_view s) {
  if (s == "lightness") return PqKind::lightness;
  if (s == "color") return PqKind::color;
  if (s == "michelson") return PqKind::michelson;
  throw std::invalid_argument("unknown quantifier '" + std::string(s) + "'");
}

PqSign parse_pq_sign(std::string_view s) {
  if (s == "right_minus_left" || s == "right") return PqSign::right_minus_left;
  if (s == "left_minus_right" || s == "left") return PqSign::left_minus_right;
  throw std::invalid_argument("unknown sign '" + std::string(s) + "'");
}

void PqConfig::validate() const {
  if (kind != PqKind::color) return;
  if (channel_weights.size() != 3) throw std::invalid_argument("colour quantifier needs three channel weights");
  if (std::all_of(channel_weights.begin(), channel_weights.end(), [](double w) { return w == 0.0; }))
    throw std::invalid_argument("colour quantifier needs at least one nonzero channel weight");
}

namespace {

double sign_factor(PqSign s) { return s == PqSign::right_minus_left ? 1.0 : -1.0; }

struct CentralPairs {
  std::vector<std::pair<int, int>> left;  // (y, x) of each left central pixel; right is x + offset
  int offset = 0;
};

CentralPairs aligned_central(const Image& response, const Stimulus& s) {
  if (response.height() != s.central_left.height() || response.width() != s.central_left.width())
    throw std::invalid_argument("response and stimulus masks differ in size");
  if (s.central_left.empty()) throw std::invalid_argument("empty central scoring area");
  if (!(s.central_left.shifted(s.offset) == s.central_right))
    throw std::invalid_argument("left and right central areas are misaligned");
  CentralPairs p;
  p.offset = s.offset;
  for (int y = 0; y < s.central_left.height(); ++y)
    for (int x = 0; x < s.central_left.width(); ++x)
      if (s.central_left.at(y, x)) p.left.emplace_back(y, x);
  return p;
}

// Mean of right - left for one channel, and its gradient (scaled by `w`).
double channel_difference(const Image& r, const CentralPairs& p, int c, double w, Image* grad) {
  double sum = 0;
  const double inv = 1.0 / static_cast<double>(p.left.size());
  for (const auto& [y, x] : p.left) {
    sum += r.at(y, x + p.offset, c) - r.at(y, x, c);
    if (grad) {
      grad->at(y, x + p.offset, c) += w * inv;
      grad->at(y, x, c) -= w * inv;
    }
  }
  return sum * inv;
}

struct MichelsonPart {
  double value;
  std::size_t argmax, argmin;
  double dmax, dmin;
};

MichelsonPart michelson_detail(const std::vector<double>& patch) {
  if (patch.empty()) throw std::invalid_argument("Michelson contrast of an empty patch");
  const auto [mn_it, mx_it] = std::minmax_element(patch.begin(), patch.end());
  const double mx = *mx_it, mn = *mn_it;
  if (mn < 0) throw std::invalid_argument("Michelson contrast needs a non-negative patch");
  if (mx + mn <= 0) throw std::invalid_argument("Michelson contrast undefined for a zero-luminance patch");
  const double s = mx + mn;
  return {(mx - mn) / s, static_cast<std::size_t>(mx_it - patch.begin()),
          static_cast<std::size_t>(mn_it - patch.begin()), 2 * mn / (s * s), -2 * mx / (s * s)};
}

}  // namespace

double michelson_contrast(const std::vector<double>& patch) { return michelson_detail(patch).value; }

double pq_lightness(const Image& response, const Stimulus& s, PqSign sign) {
  PqConfig c;
  c.kind = PqKind::lightness;
  c.sign = sign;
  return evaluate_pq(response, s, c).value;
}

double pq_color(const Image& response, const Stimulus& s, const PqConfig& config) {
  PqConfig c = config;
  c.kind = PqKind::color;
  return evaluate_pq(response, s, c).value;
}

double pq_michelson(const Image& response, const Stimulus& s, PqSign sign) {
  PqConfig c;
  c.kind = PqKind::michelson;
  c.sign = sign;
  return evaluate_pq(response, s, c).value;
}

PqResult evaluate_pq(const Image& response, const Stimulus& s, const PqConfig& config) {
  config.validate();
  const CentralPairs p = aligned_central(response, s);
  const double sf = sign_factor(config.sign);
  PqResult r;
  r.gradient = Image(response.height(), response.width(), response.channels());

  switch (config.kind) {
    case PqKind::lightness: {
      if (response.channels() != 1) throw std::invalid_argument("lightness quantifier needs a 1-channel response");
      r.value = sf * channel_difference(response, p, 0, sf, &r.gradient);
      break;
    }
    case PqKind::color: {
      if (response.channels() != 3) throw std::invalid_argument("colour quantifier needs a 3-channel response");
      for (int c = 0; c < 3; ++c) {
        const double w = config.channel_weights[c];
        if (w == 0.0) continue;
        r.value += w * sf * channel_difference(response, p, c, w * sf, &r.gradient);
      }
      break;
    }
    case PqKind::michelson: {
      if (response.channels() != 1) throw std::invalid_argument("Michelson quantifier needs a 1-channel response");
      std::vector<double> left, right;
      for (const auto& [y, x] : p.left) {
        left.push_back(response.at(y, x));
        right.push_back(response.at(y, x + p.offset));
      }
      const MichelsonPart ml = michelson_detail(left), mr = michelson_detail(right);
      r.value = sf * (mr.value - ml.value);
      auto at = [&](std::size_t i, int dx) -> double& {
        return r.gradient.at(p.left[i].first, p.left[i].second + dx);
      };
      at(mr.argmax, p.offset) += sf * mr.dmax;
      at(mr.argmin, p.offset) += sf * mr.dmin;
      at(ml.argmax, 0) -= sf * ml.dmax;
      at(ml.argmin, 0) -= sf * ml.dmin;
      break;
    }
  }
  return r;
}

IllusionScore score_illusion(const VisualTaskSolver& vts, const PqConfig& config, const Stimulus& s,
                             bool with_gradient) {
  IllusionScore out;
  if (!with_gradient) {
    out.pq = evaluate_pq(vts.respond(s.image), s, config).value;
    return out;
  }
  const VtsEvaluation ev = vts.evaluate(s.image);
  const PqResult pq = evaluate_pq(ev.response, s, config);
  out.pq = pq.value;
  out.stimulus_gradient = ev.pullback(pq.gradient);
  return out;
}

}  // namespace phantasmagoria
