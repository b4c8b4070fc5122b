#include "agb/metrics.hpp"

#include <cmath>
#include <limits>

#include "agb/error.hpp"
#include "agb/rng.hpp"

namespace agb {

double nmse(const ComplexImage& m_g, const ComplexImage& m_f) {
  if (!m_g.same_dims(m_f)) throw ShapeError("nmse: image dims differ");
  const double ref = m_f.norm_squared();
  if (!(ref > 0.0)) throw DataError("nmse: reference image has zero norm");
  double err = 0.0;
  for (std::size_t i = 0; i < m_f.size(); ++i) {
    const double dr = m_g.re()[i] - m_f.re()[i];
    const double di = m_g.im()[i] - m_f.im()[i];
    err += dr * dr + di * di;
  }
  return 100.0 * err / ref;
}

namespace {

std::vector<double> magnitude(const ComplexImage& m) {
  std::vector<double> out(m.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(m.re()[i], m.im()[i]);
  return out;
}

}  // namespace

Eigen::MatrixXd embed(std::span<const ComplexImage> images, const EmbedderConfig& cfg) {
  if (images.empty()) throw DataError("embed: no images");
  if (cfg.dim == 0) throw ConfigError("embed: dim must be positive");
  const std::size_t h = images.front().height(), w = images.front().width();
  for (const auto& img : images)
    if (img.height() != h || img.width() != w) throw ShapeError("embed: images differ in size");
  const std::size_t n = images.size();
  const std::size_t pixels = h * w;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cfg.dim));

  if (cfg.kind == EmbedderKind::projection) {
    Rng rng(derive_seed(cfg.seed, {0x656d62}));
    Eigen::MatrixXd proj(static_cast<Eigen::Index>(pixels), static_cast<Eigen::Index>(cfg.dim));
    const double s = 1.0 / std::sqrt(static_cast<double>(pixels));
    for (Eigen::Index c = 0; c < proj.cols(); ++c)
      for (Eigen::Index r = 0; r < proj.rows(); ++r) proj(r, c) = rng.normal() * s;
    Eigen::MatrixXd mags(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(pixels));
    for (std::size_t i = 0; i < n; ++i) {
      const auto mag = magnitude(images[i]);
      for (std::size_t p = 0; p < pixels; ++p) mags(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) = mag[p];
    }
    out.noalias() = mags * proj;
    return out;
  }

  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(cfg.dim))));
  if (side * side != cfg.dim || h % side != 0 || w % side != 0)
    throw ConfigError("embed: downsample dim " + std::to_string(cfg.dim) + " does not tile a " + std::to_string(h) +
                      "x" + std::to_string(w) + " image");
  const std::size_t bh = h / side, bw = w / side;
  for (std::size_t i = 0; i < n; ++i) {
    const auto mag = magnitude(images[i]);
    for (std::size_t by = 0; by < side; ++by)
      for (std::size_t bx = 0; bx < side; ++bx) {
        double acc = 0.0;
        for (std::size_t y = by * bh; y < (by + 1) * bh; ++y)
          for (std::size_t x = bx * bw; x < (bx + 1) * bw; ++x) acc += mag[y * w + x];
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(by * side + bx)) =
            acc / static_cast<double>(bh * bw);
      }
  }
  return out;
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw ShapeError("sqrtm_psd: matrix is not square");
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8) throw NumericError("sqrtm_psd: matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericError("sqrtm_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -1e-8) throw NumericError("sqrtm_psd: matrix has eigenvalue " + std::to_string(ev(i)));
    ev(i) = std::sqrt(std::max(ev(i), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

namespace {

void moments(const Eigen::MatrixXd& x, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd c = x.rowwise() - mu.transpose();
  cov = (c.transpose() * c) / static_cast<double>(x.rows() - 1);
  cov = 0.5 * (cov + cov.transpose());
}

}  // namespace

double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) throw ShapeError("frechet_distance: feature dims differ");
  if (a.rows() <= a.cols() || b.rows() <= b.cols())
    throw DataError("frechet_distance: need more rows than the feature dim " + std::to_string(a.cols()));
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);
  const Eigen::MatrixXd ra = sqrtm_psd(cov_a);
  Eigen::MatrixXd inner = ra * cov_b * ra;
  inner = 0.5 * (inner + inner.transpose());
  const double d = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * sqrtm_psd(inner).trace();
  return std::max(d, 0.0);
}

namespace {

// Mean and population standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

}  // namespace

std::size_t select_model(std::span<const std::size_t> epochs, std::span<const double> nmse_series,
                         std::span<const double> fid_series, std::size_t start_epoch) {
  if (epochs.size() != nmse_series.size() || epochs.size() != fid_series.size())
    throw DataError("select_model: series lengths differ");
  if (epochs.empty()) throw DataError("select_model: empty series");
  for (std::size_t i = 1; i < epochs.size(); ++i)
    if (epochs[i] <= epochs[i - 1]) throw DataError("select_model: epochs must be strictly increasing");

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < epochs.size(); ++i)
    if (epochs[i] >= start_epoch) idx.push_back(i);
  if (idx.size() < 2) {
    idx.clear();
    for (std::size_t i = 0; i < epochs.size(); ++i) idx.push_back(i);
  }

  std::vector<double> a, b;
  for (auto i : idx) {
    a.push_back(nmse_series[i]);
    b.push_back(fid_series[i]);
  }
  const auto [ma, sa] = mean_std(a);
  const auto [mb, sb] = mean_std(b);
  const bool raw = !(sa > 0.0) || !(sb > 0.0);

  std::vector<double> score(idx.size());
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    score[k] = raw ? a[k] + b[k] : (a[k] - ma) / sa + (b[k] - mb) / sb;
    lo = std::min(lo, score[k]);
  }
  // Scores within rounding of the minimum count as ties.
  const double tol = 1e-9 * std::max(1.0, std::abs(lo));
  for (std::size_t k = 0; k < idx.size(); ++k)
    if (score[k] <= lo + tol) return epochs[idx[k]];
  return epochs[idx.front()];
}

}  // namespace agb
