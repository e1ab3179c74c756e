#include "phantasmagoria/odog.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace phantasmagoria {

namespace fs = std::filesystem;

double OdogConfig::sigma_pixels(int k) const {
  return sigma_min_deg * std::pow(2.0, k) * pixels_per_degree();
}

double OdogConfig::scale_weight(int k) const {
  return std::pow(sigma_pixels(0) / sigma_pixels(k), weight_slope);
}

namespace {

constexpr const char* kBankTag = "phantasmagoria-odog-bank-v1";

std::vector<double> dog_filter(int n, double sigma, double ratio, double theta) {
  const int half = n / 2;
  std::vector<double> centre(static_cast<std::size_t>(n) * n, 0.0), surround(centre.size(), 0.0);
  const double c = std::cos(theta), s = std::sin(theta);
  double sum_c = 0, sum_s = 0;
  for (int dy = -half + 1; dy < half; ++dy)
    for (int dx = -half + 1; dx < half; ++dx) {
      const double along = dx * c + dy * s;
      const double across = -dx * s + dy * c;
      const std::size_t i = static_cast<std::size_t>((dy + n) % n) * n + (dx + n) % n;
      centre[i] = std::exp(-(along * along + across * across) / (2 * sigma * sigma));
      const double sa = ratio * sigma;
      surround[i] = std::exp(-(along * along) / (2 * sa * sa) - (across * across) / (2 * sigma * sigma));
      sum_c += centre[i];
      sum_s += surround[i];
    }
  for (std::size_t i = 0; i < centre.size(); ++i) centre[i] = centre[i] / sum_c - surround[i] / sum_s;
  return centre;
}

std::string describe(const OdogConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.orientations << ' ' << c.scales << ' ' << c.sigma_min_deg << ' ' << c.degrees_per_image << ' '
     << c.surround_ratio << ' ' << c.image_size;
  return os.str();
}

// Planner calls are not thread-safe in FFTW; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

OdogFilterBank OdogFilterBank::build(const OdogConfig& config) {
  if (config.orientations < 1 || config.scales < 1 || config.image_size < 2)
    throw std::invalid_argument("invalid ODOG configuration");
  OdogFilterBank bank;
  bank.config = config;
  const int n = config.canvas();
  for (int o = 0; o < config.orientations; ++o) {
    const double theta = config.orientation_deg(o) * std::numbers::pi / 180.0;
    for (int k = 0; k < config.scales; ++k)
      bank.filters.push_back(dog_filter(n, config.sigma_pixels(k), config.surround_ratio, theta));
  }
  return bank;
}

std::vector<double> OdogFilterBank::combined(int orientation) const {
  std::vector<double> out(filters.front().size(), 0.0);
  for (int k = 0; k < config.scales; ++k) {
    const double w = config.scale_weight(k);
    const auto& f = filters[static_cast<std::size_t>(orientation) * config.scales + k];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * f[i];
  }
  return out;
}

void OdogFilterBank::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << kBankTag << '\n' << describe(config) << '\n';
  for (const auto& f : filters)
    out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

OdogFilterBank OdogFilterBank::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string tag, desc;
  std::getline(in, tag);
  std::getline(in, desc);
  if (tag != kBankTag) throw std::runtime_error(path.string() + " is not an ODOG filter bank");
  std::istringstream is(desc);
  OdogConfig c;
  is >> c.orientations >> c.scales >> c.sigma_min_deg >> c.degrees_per_image >> c.surround_ratio >> c.image_size;
  if (!is) throw std::runtime_error("corrupt ODOG filter bank header in " + path.string());
  OdogFilterBank bank;
  bank.config = c;
  const std::size_t len = static_cast<std::size_t>(c.canvas()) * c.canvas();
  bank.filters.assign(static_cast<std::size_t>(c.orientations) * c.scales, std::vector<double>(len));
  for (auto& f : bank.filters) in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(len * sizeof(double)));
  if (!in) throw std::runtime_error("truncated ODOG filter bank " + path.string());
  return bank;
}

fs::path OdogFilterBank::cache_name(const OdogConfig& c) {
  return "odog_o" + std::to_string(c.orientations) + "_s" + std::to_string(c.scales) + "_n" +
         std::to_string(c.image_size) + ".bin";
}

OdogFilterBank OdogFilterBank::cached(const OdogConfig& config, const fs::path& dir) {
  const fs::path file = dir / cache_name(config);
  if (fs::exists(file)) {
    try {
      OdogFilterBank bank = load(file);
      if (describe(bank.config) == describe(config)) {
        bank.config = config;  // weighting and epsilon are not part of the filters
        return bank;
      }
    } catch (const std::exception&) {
      // unreadable cache entries are rebuilt below
    }
  }
  OdogFilterBank bank = build(config);
  bank.save(file);
  return bank;
}

// --- model -----------------------------------------------------------------

struct OdogModel::Impl {
  OdogFilterBank bank;
  int n = 0;
  int pad = 0;
  std::size_t spectrum = 0;
  std::vector<std::vector<std::complex<double>>> kernel_ft;
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  struct Buffers {
    double* real;
    fftw_complex* freq;
    Buffers(std::size_t nr, std::size_t nc)
        : real(fftw_alloc_real(nr)), freq(fftw_alloc_complex(nc)) {}
    ~Buffers() {
      fftw_free(real);
      fftw_free(freq);
    }
    Buffers(const Buffers&) = delete;
    Buffers& operator=(const Buffers&) = delete;
  };

  std::size_t real_size() const { return static_cast<std::size_t>(n) * n; }
};

OdogModel::OdogModel(OdogFilterBank bank) : impl_(std::make_unique<Impl>()) {
  Impl& m = *impl_;
  m.bank = std::move(bank);
  m.n = m.bank.config.canvas();
  m.pad = (m.n - m.bank.config.image_size) / 2;
  m.spectrum = static_cast<std::size_t>(m.n) * (m.n / 2 + 1);

  Impl::Buffers buf(m.real_size(), m.spectrum);
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    m.forward = fftw_plan_dft_r2c_2d(m.n, m.n, buf.real, buf.freq, FFTW_ESTIMATE);
    m.inverse = fftw_plan_dft_c2r_2d(m.n, m.n, buf.freq, buf.real, FFTW_ESTIMATE);
  }
  for (int o = 0; o < m.bank.config.orientations; ++o) {
    const auto k = m.bank.combined(o);
    std::memcpy(buf.real, k.data(), k.size() * sizeof(double));
    fftw_execute_dft_r2c(m.forward, buf.real, buf.freq);
    std::vector<std::complex<double>> ft(m.spectrum);
    const auto* f = reinterpret_cast<const std::complex<double>*>(buf.freq);
    std::copy(f, f + m.spectrum, ft.begin());
    m.kernel_ft.push_back(std::move(ft));
  }
}

OdogModel::~OdogModel() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(impl_->forward);
  fftw_destroy_plan(impl_->inverse);
}

const OdogConfig& OdogModel::config() const { return impl_->bank.config; }
const OdogFilterBank& OdogModel::bank() const { return impl_->bank; }

namespace {

void check_gray(const Image& im, int size) {
  if (im.channels() != 1)
    throw std::invalid_argument("ODOG takes single-channel input; convert colour stimuli to luminance first");
  if (im.height() != size || im.width() != size)
    throw std::invalid_argument("ODOG configured for " + std::to_string(size) + "x" + std::to_string(size) +
                                " input");
}

}  // namespace

std::vector<double> OdogModel::filter(const Image& gray, int o) const {
  OdogTrace t;
  // Cheap enough to run the full bank; callers use this for the linear-stage checks.
  respond(gray, &t);
  return t.filtered.at(o);
}

Image OdogModel::respond(const Image& gray, OdogTrace* trace) const {
  const Impl& m = *impl_;
  const int size = m.bank.config.image_size;
  check_gray(gray, size);
  const int n = m.n;

  double mean = 0;
  for (double v : gray.data()) mean += v;
  mean /= static_cast<double>(gray.size());

  Impl::Buffers buf(m.real_size(), m.spectrum);
  std::fill(buf.real, buf.real + m.real_size(), 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) buf.real[static_cast<std::size_t>(y + m.pad) * n + x + m.pad] = gray.at(y, x) - mean;
  fftw_execute_dft_r2c(m.forward, buf.real, buf.freq);
  std::vector<std::complex<double>> image_ft(m.spectrum);
  {
    const auto* f = reinterpret_cast<const std::complex<double>*>(buf.freq);
    std::copy(f, f + m.spectrum, image_ft.begin());
  }

  const double scale = 1.0 / (static_cast<double>(n) * n);
  const std::size_t pixels = static_cast<std::size_t>(size) * size;
  OdogTrace local;
  OdogTrace& t = trace ? *trace : local;
  t.filtered.assign(m.bank.config.orientations, std::vector<double>(pixels));
  t.rms.assign(m.bank.config.orientations, 0.0);

  Image out(size, size, 1);
  for (int o = 0; o < m.bank.config.orientations; ++o) {
    auto* f = reinterpret_cast<std::complex<double>*>(buf.freq);
    for (std::size_t i = 0; i < m.spectrum; ++i) f[i] = image_ft[i] * m.kernel_ft[o][i];
    fftw_execute_dft_c2r(m.inverse, buf.freq, buf.real);
    auto& r = t.filtered[o];
    double ss = 0;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const double v = buf.real[static_cast<std::size_t>(y + m.pad) * n + x + m.pad] * scale;
        r[static_cast<std::size_t>(y) * size + x] = v;
        ss += v * v;
      }
    t.rms[o] = std::sqrt(ss / static_cast<double>(pixels));
    const double denom = t.rms[o] + m.bank.config.rms_epsilon;
    for (std::size_t i = 0; i < pixels; ++i) out.data()[i] += r[i] / denom;
  }
  return out;
}

Image OdogModel::pullback(const OdogTrace& t, const Image& dresponse) const {
  const Impl& m = *impl_;
  const int size = m.bank.config.image_size;
  check_gray(dresponse, size);
  const int n = m.n;
  const std::size_t pixels = static_cast<std::size_t>(size) * size;

  Impl::Buffers buf(m.real_size(), m.spectrum);
  std::vector<std::complex<double>> acc(m.spectrum, 0.0);
  for (int o = 0; o < m.bank.config.orientations; ++o) {
    const auto& r = t.filtered.at(o);
    const double rms = t.rms.at(o);
    const double denom = rms + m.bank.config.rms_epsilon;
    double gr = 0;
    for (std::size_t i = 0; i < pixels; ++i) gr += dresponse.data()[i] * r[i];
    const double coupling = rms > 0 ? gr / (denom * denom * static_cast<double>(pixels) * rms) : 0.0;

    std::fill(buf.real, buf.real + m.real_size(), 0.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * size + x;
        buf.real[static_cast<std::size_t>(y + m.pad) * n + x + m.pad] = dresponse.data()[i] / denom - coupling * r[i];
      }
    fftw_execute_dft_r2c(m.forward, buf.real, buf.freq);
    const auto* f = reinterpret_cast<const std::complex<double>*>(buf.freq);
    for (std::size_t i = 0; i < m.spectrum; ++i) acc[i] += f[i] * std::conj(m.kernel_ft[o][i]);
  }
  std::copy(acc.begin(), acc.end(), reinterpret_cast<std::complex<double>*>(buf.freq));
  fftw_execute_dft_c2r(m.inverse, buf.freq, buf.real);

  const double scale = 1.0 / (static_cast<double>(n) * n);
  Image dx(size, size, 1);
  double mean = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double v = buf.real[static_cast<std::size_t>(y + m.pad) * n + x + m.pad] * scale;
      dx.at(y, x) = v;
      mean += v;
    }
  mean /= static_cast<double>(pixels);
  for (double& v : dx.data()) v -= mean;
  return dx;
}

}  // namespace phantasmagoria
