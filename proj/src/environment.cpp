#include "dg/environment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "dg/errors.hpp"
#include "dg/matrix_io.hpp"
#include "dg/rng.hpp"

namespace dg {

Eigen::Index Environment::min_domain_size() const {
  Eigen::Index m = domains.empty() ? 0 : domains.front().size();
  for (const auto& d : domains) m = std::min(m, d.size());
  return m;
}

const Domain& Environment::domain_by_id(const std::string& id) const {
  for (const auto& d : domains)
    if (d.id == id) return d;
  throw DataError("unknown domain id: " + id);
}

bool Environment::has_domain(const std::string& id) const {
  for (const auto& d : domains)
    if (d.id == id) return true;
  return false;
}

void Environment::validate() const {
  if (domains.empty()) throw DataError("environment has no domains");
  if (num_classes < 1) throw DataError("environment needs at least one class");
  for (const auto& d : domains) {
    if (d.size() == 0) throw DataError("domain '" + d.id + "' is empty");
    if (d.feature_dim() != feature_dim)
      throw DataError("domain '" + d.id + "' feature dim " + std::to_string(d.feature_dim()) +
                      " != environment dim " + std::to_string(feature_dim));
    if (d.labels.size() != d.size())
      throw DataError("domain '" + d.id + "' label/sample count mismatch");
    if (!d.features.allFinite())
      throw DataError("domain '" + d.id + "' has non-finite features");
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (d.labels(i) < 0 || d.labels(i) >= num_classes)
        throw DataError("domain '" + d.id + "' label out of range at row " + std::to_string(i));
  }
}

void SynthSpec::validate() const {
  if (n_domains < 1) throw DataError("synth spec: n_domains must be >= 1");
  if (feature_dim < 1) throw DataError("synth spec: feature_dim must be >= 1");
  if (num_classes < 2) throw DataError("synth spec: num_classes must be >= 2");
  if (m_per_domain < 2 * num_classes)
    throw DataError("synth spec: m_per_domain must be >= 2*num_classes");
  if (shift_scale < 0.0) throw DataError("synth spec: shift_scale must be >= 0");
  if (label_noise < 0.0 || label_noise >= 0.5)
    throw DataError("synth spec: label_noise must lie in [0, 0.5)");
}

// Per-dimension noise scales, log-spaced over a few octaves. Varying the
// signal-to-noise ratio across dimensions is what gives the regularisation
// path its bias-variance shape: heavy shrinkage misallocates weight to the
// noisy dimensions, weak shrinkage chases them.
Eigen::VectorXd synth_noise_scales(int d) {
  Eigen::VectorXd scales(d);
  if (d == 1) {
    scales(0) = 1.0;
    return scales;
  }
  for (int j = 0; j < d; ++j)
    scales(j) = std::exp2(-2.5 + 5.0 * double(j) / double(d - 1));
  return scales;
}

SynthMeans synth_means(const SynthSpec& spec) {
  spec.validate();
  const int d = spec.feature_dim, k = spec.num_classes;
  SynthMeans out;
  out.anchors.resize(k, d);
  Rng anchor_rng(derive_seed(spec.seed, "synth/anchors"));
  // Anchor contrasts track the noise spectrum (constant per-dimension SNR,
  // unit expected norm in noise units), while the domain offsets below are
  // isotropic in raw units. Domain identity therefore looks like outsized
  // signal on the quiet dimensions, which is what a model with too much
  // capacity latches onto.
  const Eigen::VectorXd noise_scale = synth_noise_scales(d);
  const double anchor_scale = 2.0 / std::sqrt(double(d));
  for (int c = 0; c < k; ++c)
    for (int j = 0; j < d; ++j)
      out.anchors(c, j) = anchor_scale * noise_scale(j) * anchor_rng.normal();

  out.domain_means.reserve(spec.n_domains);
  for (int dom = 0; dom < spec.n_domains; ++dom) {
    Eigen::MatrixXd means = out.anchors;
    if (spec.shift_scale > 0.0) {
      Rng off_rng(derive_seed(spec.seed, "synth/offsets", static_cast<uint64_t>(dom)));
      for (int c = 0; c < k; ++c) {
        const auto offset = off_rng.sphere_vector(d, spec.shift_scale);
        for (int j = 0; j < d; ++j) means(c, j) += offset[j];
      }
    }
    out.domain_means.push_back(std::move(means));
  }
  return out;
}

Environment synth_environment(const SynthSpec& spec) {
  const SynthMeans means = synth_means(spec);
  const int d = spec.feature_dim, k = spec.num_classes;
  const Eigen::VectorXd noise_scale = synth_noise_scales(d);

  Environment env;
  env.num_classes = k;
  env.feature_dim = d;
  env.domains.reserve(spec.n_domains);

  for (int dom = 0; dom < spec.n_domains; ++dom) {
    Domain domain;
    domain.id = "d" + std::to_string(dom);
    domain.features.resize(spec.m_per_domain, d);
    domain.labels.resize(spec.m_per_domain);

    Rng noise_rng(derive_seed(spec.seed, "synth/noise", static_cast<uint64_t>(dom)));
    Rng flip_rng(derive_seed(spec.seed, "synth/flips", static_cast<uint64_t>(dom)));

    Eigen::Index row = 0;
    for (int c = 0; c < k; ++c) {
      // Classes are as balanced as the sample budget allows.
      const int count = spec.m_per_domain / k + (c < spec.m_per_domain % k ? 1 : 0);
      for (int i = 0; i < count; ++i, ++row) {
        for (int j = 0; j < d; ++j)
          domain.features(row, j) =
              means.domain_means[dom](c, j) + noise_scale(j) * noise_rng.normal();
        int label = c;
        if (spec.label_noise > 0.0 && flip_rng.uniform() < spec.label_noise) {
          const int shift = static_cast<int>(flip_rng.uniform_int(1, k - 1));
          label = (c + shift) % k;
        }
        domain.labels(row) = label;
      }
    }
    env.domains.push_back(std::move(domain));
  }
  env.validate();
  return env;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

Environment load_feature_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open: " + path);

  std::string line;
  if (!std::getline(is, line)) throw DataError(path + ":1: empty file");
  const auto header = split_line(strip_cr(line));
  if (header.size() < 3 || header[0] != "domain" || header[1] != "label")
    throw DataError(path + ":1: header must be domain,label,f0,...");
  const int d = static_cast<int>(header.size()) - 2;
  for (int j = 0; j < d; ++j)
    if (header[2 + j] != "f" + std::to_string(j))
      throw DataError(path + ":1: unexpected feature column '" + header[2 + j] + "'");

  // Rows accumulate per domain in file order; domains ordered by first appearance.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<Eigen::VectorXd, int>>> rows;
  int max_label = -1;
  int64_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (static_cast<int>(cells.size()) != d + 2)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(d + 2) + " fields, got " + std::to_string(cells.size()));
    Eigen::VectorXd x(d);
    int label = 0;
    try {
      size_t pos = 0;
      label = std::stoi(cells[1], &pos);
      if (pos != cells[1].size()) throw std::invalid_argument("trailing");
      for (int j = 0; j < d; ++j) {
        x(j) = std::stod(cells[2 + j], &pos);
        if (pos != cells[2 + j].size()) throw std::invalid_argument("trailing");
      }
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (label < 0) throw DataError(path + ":" + std::to_string(lineno) + ": negative label");
    if (!x.allFinite())
      throw DataError(path + ":" + std::to_string(lineno) + ": non-finite feature");
    max_label = std::max(max_label, label);
    if (!rows.count(cells[0])) order.push_back(cells[0]);
    rows[cells[0]].emplace_back(std::move(x), label);
  }
  if (order.empty()) throw DataError(path + ": no data rows");

  Environment env;
  env.feature_dim = d;
  env.num_classes = max_label + 1;
  for (const auto& id : order) {
    const auto& rs = rows[id];
    Domain dom;
    dom.id = id;
    dom.features.resize(static_cast<Eigen::Index>(rs.size()), d);
    dom.labels.resize(static_cast<Eigen::Index>(rs.size()));
    for (size_t i = 0; i < rs.size(); ++i) {
      dom.features.row(static_cast<Eigen::Index>(i)) = rs[i].first.transpose();
      dom.labels(static_cast<Eigen::Index>(i)) = rs[i].second;
    }
    env.domains.push_back(std::move(dom));
  }
  env.validate();
  return env;
}

void save_feature_csv(const Environment& env, const std::string& path) {
  std::ofstream os(path, std::ios::binary);  // binary keeps LF endings everywhere
  if (!os) throw DataError("cannot open for writing: " + path);
  os << "domain,label";
  for (int j = 0; j < env.feature_dim; ++j) os << ",f" << j;
  os << '\n';
  for (const auto& d : env.domains)
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      os << d.id << ',' << d.labels(i);
      for (Eigen::Index j = 0; j < d.feature_dim(); ++j)
        os << ',' << format_real(d.features(i, j));
      os << '\n';
    }
  if (!os) throw DataError("write failed: " + path);
}

namespace {

uint32_t read_be32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated header");
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

}  // namespace

Domain load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream imgs(images_path, std::ios::binary);
  if (!imgs) throw DataError("cannot open: " + images_path);
  std::ifstream labs(labels_path, std::ios::binary);
  if (!labs) throw DataError("cannot open: " + labels_path);

  const uint32_t img_magic = read_be32(imgs, images_path);
  if (img_magic != 0x00000803u)
    throw DataError(images_path + ": wrong magic for image file");
  const uint32_t lab_magic = read_be32(labs, labels_path);
  if (lab_magic != 0x00000801u)
    throw DataError(labels_path + ": wrong magic for label file");

  const uint32_t n_images = read_be32(imgs, images_path);
  const uint32_t rows = read_be32(imgs, images_path);
  const uint32_t cols = read_be32(imgs, images_path);
  const uint32_t n_labels = read_be32(labs, labels_path);
  if (n_images != n_labels)
    throw DataError("image/label count mismatch: " + std::to_string(n_images) + " vs " +
                    std::to_string(n_labels));

  const size_t pixels = size_t(rows) * cols;
  std::vector<unsigned char> buf(pixels);
  Domain dom;
  dom.id = std::filesystem::path(images_path).stem().string();
  dom.features.resize(n_images, static_cast<Eigen::Index>(pixels));
  dom.labels.resize(n_images);
  for (uint32_t i = 0; i < n_images; ++i) {
    if (!imgs.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
      throw DataError(images_path + ": truncated at image " + std::to_string(i));
    for (size_t p = 0; p < pixels; ++p)
      dom.features(i, static_cast<Eigen::Index>(p)) = buf[p] / 255.0;
    char lab = 0;
    if (!labs.read(&lab, 1))
      throw DataError(labels_path + ": truncated at label " + std::to_string(i));
    dom.labels(i) = static_cast<unsigned char>(lab);
  }
  return dom;
}

Domain rotate_domain(const Domain& domain, double angle_deg) {
  const auto dim = domain.feature_dim();
  const auto side = static_cast<Eigen::Index>(std::llround(std::sqrt(double(dim))));
  if (side * side != dim)
    throw DataError("rotate_domain: feature count " + std::to_string(dim) +
                    " is not a square image");

  const double theta = angle_deg * M_PI / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double centre = (double(side) - 1.0) / 2.0;

  Domain out;
  out.id = domain.id;
  out.labels = domain.labels;
  out.features.resize(domain.size(), dim);

  // Inverse mapping: each output pixel samples the source at the back-rotated
  // position; bilinear weights, zero outside the frame.
  for (Eigen::Index s = 0; s < domain.size(); ++s) {
    for (Eigen::Index r = 0; r < side; ++r) {
      for (Eigen::Index c = 0; c < side; ++c) {
        const double dr = double(r) - centre, dc = double(c) - centre;
        const double src_r = centre + ct * dr - st * dc;
        const double src_c = centre + st * dr + ct * dc;
        const auto r0 = static_cast<Eigen::Index>(std::floor(src_r));
        const auto c0 = static_cast<Eigen::Index>(std::floor(src_c));
        const double fr = src_r - double(r0), fc = src_c - double(c0);
        auto at = [&](Eigen::Index rr, Eigen::Index cc) -> double {
          if (rr < 0 || rr >= side || cc < 0 || cc >= side) return 0.0;
          return domain.features(s, rr * side + cc);
        };
        const double v = (1 - fr) * (1 - fc) * at(r0, c0) + (1 - fr) * fc * at(r0, c0 + 1) +
                         fr * (1 - fc) * at(r0 + 1, c0) + fr * fc * at(r0 + 1, c0 + 1);
        out.features(s, r * side + c) = v;
      }
    }
  }
  return out;
}

namespace {

// Per-class train counts via largest-remainder apportionment: the total hits
// round(frac*m) while every class keeps at least one sample on each side.
std::map<int, Eigen::Index> stratified_counts(const std::map<int, Eigen::Index>& class_counts,
                                              double frac, const std::string& domain_id) {
  Eigen::Index m = 0;
  for (const auto& [c, count] : class_counts) {
    if (count < 2)
      throw DataError("split error: class " + std::to_string(c) + " has fewer than 2 samples in domain '" +
                      domain_id + "'");
    m += count;
  }
  const auto n_classes = static_cast<Eigen::Index>(class_counts.size());
  Eigen::Index target = static_cast<Eigen::Index>(std::llround(frac * double(m)));
  target = std::clamp(target, n_classes, m - n_classes);

  std::map<int, Eigen::Index> take;
  std::vector<std::pair<double, int>> remainder;  // (-frac_part, class) for stable descending sort
  Eigen::Index total = 0;
  for (const auto& [c, count] : class_counts) {
    const double exact = frac * double(count);
    auto base = static_cast<Eigen::Index>(std::floor(exact));
    base = std::clamp(base, Eigen::Index(1), count - 1);
    take[c] = base;
    total += base;
    remainder.emplace_back(-(exact - std::floor(exact)), c);
  }
  std::sort(remainder.begin(), remainder.end());
  Eigen::Index excess = target - total;
  for (auto [negfrac, c] : remainder) {
    (void)negfrac;
    if (excess == 0) break;
    if (excess > 0 && take[c] < class_counts.at(c) - 1) {
      ++take[c];
      --excess;
    }
  }
  for (auto it = remainder.rbegin(); it != remainder.rend() && excess < 0; ++it) {
    const int c = it->second;
    if (take[c] > 1) {
      --take[c];
      ++excess;
    }
  }
  return take;
}

Domain take_rows(const Domain& d, const std::vector<Eigen::Index>& idx) {
  Domain out;
  out.id = d.id;
  out.features.resize(static_cast<Eigen::Index>(idx.size()), d.feature_dim());
  out.labels.resize(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) {
    out.features.row(static_cast<Eigen::Index>(i)) = d.features.row(idx[i]);
    out.labels(static_cast<Eigen::Index>(i)) = d.labels(idx[i]);
  }
  return out;
}

}  // namespace

std::pair<Environment, Environment> split_environment(const Environment& env, double train_frac,
                                                      uint64_t seed) {
  env.validate();
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw DataError("split error: train_frac must lie in (0, 1)");

  Environment train = env, test = env;
  train.domains.clear();
  test.domains.clear();

  for (size_t di = 0; di < env.domains.size(); ++di) {
    const Domain& d = env.domains[di];
    std::map<int, std::vector<Eigen::Index>> by_class;
    for (Eigen::Index i = 0; i < d.size(); ++i) by_class[d.labels(i)].push_back(i);
    std::map<int, Eigen::Index> counts;
    for (const auto& [c, v] : by_class) counts[c] = static_cast<Eigen::Index>(v.size());
    const auto take = stratified_counts(counts, train_frac, d.id);

    Rng rng(derive_seed(seed, "split/" + d.id));
    std::vector<Eigen::Index> train_idx, test_idx;
    for (auto& [c, idx] : by_class) {
      rng.shuffle(idx);
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(idx.size()); ++i)
        (i < take.at(c) ? train_idx : test_idx).push_back(idx[i]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    train.domains.push_back(take_rows(d, train_idx));
    test.domains.push_back(take_rows(d, test_idx));
  }
  return {std::move(train), std::move(test)};
}

Environment equalize_m(const Environment& env, uint64_t seed) {
  env.validate();
  const Eigen::Index m = env.min_domain_size();
  Environment out = env;
  out.domains.clear();
  for (const auto& d : env.domains) {
    std::vector<Eigen::Index> idx(static_cast<size_t>(d.size()));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, "equalize/" + d.id));
    rng.shuffle(idx);
    idx.resize(static_cast<size_t>(m));
    std::sort(idx.begin(), idx.end());
    out.domains.push_back(take_rows(d, idx));
  }
  return out;
}

Dataset pool(const Environment& env) {
  Eigen::Index total = 0;
  for (const auto& d : env.domains) total += d.size();
  Dataset ds;
  ds.X.resize(total, env.feature_dim);
  ds.y.resize(total);
  Eigen::Index row = 0;
  for (const auto& d : env.domains) {
    ds.X.middleRows(row, d.size()) = d.features;
    ds.y.segment(row, d.size()) = d.labels;
    row += d.size();
  }
  return ds;
}

Dataset pool_excluding(const Environment& env, const std::string& heldout_id) {
  return pool(drop_domain(env, heldout_id));
}

Dataset domain_dataset(const Domain& d) { return {d.features, d.labels}; }

Environment drop_domain(const Environment& env, const std::string& id) {
  if (!env.has_domain(id)) throw DataError("unknown domain id: " + id);
  Environment out = env;
  out.domains.clear();
  for (const auto& d : env.domains)
    if (d.id != id) out.domains.push_back(d);
  if (out.domains.empty()) throw DataError("dropping '" + id + "' leaves no domains");
  return out;
}

}  // namespace dg
