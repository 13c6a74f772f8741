#include "qp/lookup_table.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include "qp/detail/sha256.hpp"
#include "qp/errors.hpp"

namespace qp {

namespace {

constexpr char kMagic[4] = {'Q', 'P', 'L', 'T'};
constexpr std::uint16_t kFormatVersion = 1;

double project_node(const Likelihood& lik, const CavityParams& cavity, int y) {
  const TiltedMoments tilted = lik.tilted_moments(cavity, y);
  const auto cdf = [&](double x) { return lik.tilted_cdf(x, cavity, y).value; };
  W2Options opts;
  opts.scale_hint = std::sqrt(tilted.var);
  const ProjectedGaussian g =
      project_w2(cdf, tilted.mean, lik.support_hint(cavity, y), opts);
  return std::sqrt(g.var);
}

TableLikelihood table_id_for(const Likelihood& lik) {
  const std::string name = lik.name();
  if (name == "probit") return TableLikelihood::probit;
  if (name == "poisson_square") return TableLikelihood::poisson_square;
  throw ValidationError("precompute_table: no table id for likelihood " + name);
}

// Little-endian scalar IO helpers. The build targets little-endian hosts; the
// explicit byte handling keeps the file layout pinned either way.
template <class T>
void put_scalar(std::string& out, T v) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(reinterpret_cast<char*>(bytes), sizeof(T));
}

template <class T>
T get_scalar(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("load_table: truncated file");
  return v;
}

}  // namespace

void GridAxis::validate() const {
  if (!(lo < hi) || count < 2 || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ValidationError("GridAxis: requires lo < hi and count >= 2");
  }
}

GridAxis GridAxis::from_step(double lo, double hi, double step) {
  if (!(step > 0.0) || !(lo < hi)) {
    throw ValidationError("GridAxis::from_step: requires lo < hi and step > 0");
  }
  GridAxis axis;
  axis.lo = lo;
  axis.hi = hi;
  axis.count = static_cast<std::uint32_t>(std::llround((hi - lo) / step)) + 1;
  return axis;
}

GridSpec GridSpec::classification_default() {
  GridSpec spec;
  spec.mu = GridAxis::from_step(-10.0, 10.0, 1e-3);
  spec.log10_sigma = GridAxis::from_step(-1.0, 1.0, 1e-3);
  return spec;
}

int SigmaLookupTable::slice_of(int y) const {
  for (std::size_t i = 0; i < y_values.size(); ++i) {
    if (y_values[i] == y) return static_cast<int>(i);
  }
  return -1;
}

SigmaLookupTable precompute_table(const Likelihood& lik, const std::vector<int>& y_set,
                                  const GridSpec& grid, int parallelism,
                                  PrecomputeReport* report) {
  grid.mu.validate();
  grid.log10_sigma.validate();
  if (y_set.empty()) throw ValidationError("precompute_table: empty y set");
  const int workers = std::max(1, parallelism);

  SigmaLookupTable table;
  table.likelihood = table_id_for(lik);
  table.mu_axis = grid.mu;
  table.sigma_axis = grid.log10_sigma;
  table.y_values = y_set;

  const std::uint32_t n_mu = grid.mu.count;
  const std::uint32_t n_sigma = grid.log10_sigma.count;
  std::atomic<std::uint64_t> failures{0};

  for (int y : y_set) {
    lik.validate_observation(y);
    std::vector<double> slice(std::size_t(n_mu) * n_sigma);
    const auto fill_rows = [&](std::uint32_t row_begin, std::uint32_t row_end) {
      for (std::uint32_t i = row_begin; i < row_end; ++i) {
        const double mu = grid.mu.at(i);
        for (std::uint32_t j = 0; j < n_sigma; ++j) {
          const double sigma = std::pow(10.0, grid.log10_sigma.at(j));
          double value = std::numeric_limits<double>::quiet_NaN();
          try {
            value = project_node(lik, CavityParams{mu, sigma * sigma}, y);
          } catch (const std::exception&) {
            failures.fetch_add(1, std::memory_order_relaxed);
          }
          slice[std::size_t(i) * n_sigma + j] = value;
        }
      }
    };
    if (workers == 1) {
      fill_rows(0, n_mu);
    } else {
      std::vector<std::thread> pool;
      const std::uint32_t chunk = (n_mu + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        const std::uint32_t begin = std::min<std::uint32_t>(w * chunk, n_mu);
        const std::uint32_t end = std::min<std::uint32_t>(begin + chunk, n_mu);
        if (begin < end) pool.emplace_back(fill_rows, begin, end);
      }
      for (auto& t : pool) t.join();
    }
    table.values.push_back(std::move(slice));
  }

  const std::uint64_t nodes = std::uint64_t(n_mu) * n_sigma * y_set.size();
  if (report != nullptr) {
    report->nodes = nodes;
    report->failures = failures.load();
  }
  if (failures.load() * 1e6 >= static_cast<double>(nodes)) {
    throw NumericalError("precompute_table: node failure rate reached 1e-6 (" +
                         std::to_string(failures.load()) + "/" + std::to_string(nodes) +
                         ")");
  }
  return table;
}

namespace {

InterpResult interp_impl(const SigmaLookupTable& table, const Likelihood& lik,
                         const CavityParams& cavity, int y,
                         const TiltedMoments& tilted) {
  const int slice = table.slice_of(y);
  const double mu = cavity.mean;
  const double ls = 0.5 * std::log10(cavity.var);
  const GridAxis& ax_mu = table.mu_axis;
  const GridAxis& ax_ls = table.sigma_axis;
  if (slice < 0 || mu < ax_mu.lo || mu > ax_mu.hi || ls < ax_ls.lo || ls > ax_ls.hi) {
    return {std::sqrt(tilted.var), SigmaSource::fallback_ep};
  }
  const double fi = (mu - ax_mu.lo) / ax_mu.step();
  const double fj = (ls - ax_ls.lo) / ax_ls.step();
  const auto clamp_idx = [](double f, std::uint32_t count) {
    const auto i = static_cast<std::uint32_t>(std::min<double>(f, count - 2.0));
    return std::min(i, count - 2);
  };
  const std::uint32_t i0 = clamp_idx(fi, ax_mu.count);
  const std::uint32_t j0 = clamp_idx(fj, ax_ls.count);
  const double wi = fi - i0;
  const double wj = fj - j0;
  const double v00 = table.at(slice, i0, j0);
  const double v01 = table.at(slice, i0, j0 + 1);
  const double v10 = table.at(slice, i0 + 1, j0);
  const double v11 = table.at(slice, i0 + 1, j0 + 1);
  if (std::isnan(v00) || std::isnan(v01) || std::isnan(v10) || std::isnan(v11)) {
    const auto cdf = [&](double x) { return lik.tilted_cdf(x, cavity, y).value; };
    const ProjectedGaussian g =
        project_w2(cdf, tilted.mean, lik.support_hint(cavity, y));
    return {std::sqrt(g.var), SigmaSource::fallback_direct};
  }
  const double top = v00 * (1.0 - wj) + v01 * wj;
  const double bottom = v10 * (1.0 - wj) + v11 * wj;
  return {top * (1.0 - wi) + bottom * wi, SigmaSource::table};
}

}  // namespace

InterpResult interp_sigma(const SigmaLookupTable& table, const Likelihood& lik,
                          const CavityParams& cavity, int y) {
  return interp_impl(table, lik, cavity, y, lik.tilted_moments(cavity, y));
}

InterpResult interp_sigma_with_moments(const SigmaLookupTable& table,
                                       const Likelihood& lik, const CavityParams& cavity,
                                       int y, const TiltedMoments& tilted) {
  return interp_impl(table, lik, cavity, y, tilted);
}

void save_table(const SigmaLookupTable& table, const std::string& path) {
  if (table.values.size() != table.y_values.size()) {
    throw ValidationError("save_table: slice count mismatch");
  }
  std::string payload;
  payload.reserve(64);
  payload.append(kMagic, 4);
  put_scalar<std::uint16_t>(payload, kFormatVersion);
  put_scalar<std::uint8_t>(payload, static_cast<std::uint8_t>(table.likelihood));
  put_scalar<std::uint16_t>(payload, static_cast<std::uint16_t>(table.y_values.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("save_table: cannot open " + path);
  detail::Sha256 hash;
  const auto write_chunk = [&](const char* data, std::size_t len) {
    hash.update(data, len);
    out.write(data, static_cast<std::streamsize>(len));
  };
  write_chunk(payload.data(), payload.size());

  for (std::size_t s = 0; s < table.y_values.size(); ++s) {
    std::string head;
    put_scalar<std::int32_t>(head, table.y_values[s]);
    put_scalar<double>(head, table.mu_axis.lo);
    put_scalar<double>(head, table.mu_axis.hi);
    put_scalar<std::uint32_t>(head, table.mu_axis.count);
    put_scalar<double>(head, table.sigma_axis.lo);
    put_scalar<double>(head, table.sigma_axis.hi);
    put_scalar<std::uint32_t>(head, table.sigma_axis.count);
    write_chunk(head.data(), head.size());
    const auto& slice = table.values[s];
    const std::size_t expect = std::size_t(table.mu_axis.count) * table.sigma_axis.count;
    if (slice.size() != expect) throw ValidationError("save_table: slice size mismatch");
    write_chunk(reinterpret_cast<const char*>(slice.data()), slice.size() * sizeof(double));
  }
  const auto digest = hash.finish();
  out.write(reinterpret_cast<const char*>(digest.data()),
            static_cast<std::streamsize>(digest.size()));
  if (!out) throw ValidationError("save_table: write failed for " + path);
}

SigmaLookupTable load_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("load_table: cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::int64_t file_size = in.tellg();
  in.seekg(0, std::ios::beg);
  if (file_size < 4 + 2 + 1 + 2 + 32) throw ValidationError("load_table: truncated file");

  detail::Sha256 hash;
  const std::int64_t hashed_size = file_size - 32;
  {
    std::vector<char> buf(1 << 16);
    std::int64_t remaining = hashed_size;
    while (remaining > 0) {
      const std::int64_t take = std::min<std::int64_t>(remaining, buf.size());
      in.read(buf.data(), take);
      if (!in) throw ValidationError("load_table: truncated file");
      hash.update(buf.data(), static_cast<std::size_t>(take));
      remaining -= take;
    }
  }
  const auto computed = hash.finish();
  std::array<std::uint8_t, 32> stored;
  in.read(reinterpret_cast<char*>(stored.data()), 32);
  if (!in) throw ValidationError("load_table: truncated file");
  if (stored != computed) throw ValidationError("load_table: checksum mismatch in " + path);

  in.clear();
  in.seekg(0, std::ios::beg);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("load_table: bad magic in " + path);
  }
  const auto version = get_scalar<std::uint16_t>(in);
  if (version != kFormatVersion) {
    throw ValidationError("load_table: unsupported format version " +
                          std::to_string(version));
  }
  SigmaLookupTable table;
  table.likelihood = static_cast<TableLikelihood>(get_scalar<std::uint8_t>(in));
  const auto n_slices = get_scalar<std::uint16_t>(in);
  if (n_slices == 0) throw ValidationError("load_table: no slices");
  bool axes_set = false;
  for (std::uint16_t s = 0; s < n_slices; ++s) {
    const auto y = get_scalar<std::int32_t>(in);
    GridAxis mu_axis, sigma_axis;
    mu_axis.lo = get_scalar<double>(in);
    mu_axis.hi = get_scalar<double>(in);
    mu_axis.count = get_scalar<std::uint32_t>(in);
    sigma_axis.lo = get_scalar<double>(in);
    sigma_axis.hi = get_scalar<double>(in);
    sigma_axis.count = get_scalar<std::uint32_t>(in);
    mu_axis.validate();
    sigma_axis.validate();
    if (!axes_set) {
      table.mu_axis = mu_axis;
      table.sigma_axis = sigma_axis;
      axes_set = true;
    } else if (mu_axis.lo != table.mu_axis.lo || mu_axis.hi != table.mu_axis.hi ||
               mu_axis.count != table.mu_axis.count || sigma_axis.lo != table.sigma_axis.lo ||
               sigma_axis.hi != table.sigma_axis.hi ||
               sigma_axis.count != table.sigma_axis.count) {
      throw ValidationError("load_table: slices with differing axes are not supported");
    }
    std::vector<double> slice(std::size_t(mu_axis.count) * sigma_axis.count);
    in.read(reinterpret_cast<char*>(slice.data()),
            static_cast<std::streamsize>(slice.size() * sizeof(double)));
    if (!in) throw ValidationError("load_table: truncated slice data");
    table.y_values.push_back(y);
    table.values.push_back(std::move(slice));
  }
  table.checksum = computed;
  return table;
}

std::string checksum_hex(const std::array<std::uint8_t, 32>& digest) {
  std::string out(64, '0');
  static const char* hex = "0123456789abcdef";
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = hex[digest[i] >> 4];
    out[2 * i + 1] = hex[digest[i] & 0xf];
  }
  return out;
}

}  // namespace qp
