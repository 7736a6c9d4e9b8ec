#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/wav.hpp"

namespace darccn::data {

using signal::Waveform;

inline double rms(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

// The SNR points mixtures are drawn at, in dB.
inline std::vector<double> snr_grid() {
  std::vector<double> g;
  for (int s = 0; s <= 40; s += 2) g.push_back(static_cast<double>(s));
  return g;
}

// Random crop when too long, cyclically tiled from a random offset when too
// short; identity length is left untouched apart from the copy.
inline std::vector<double> fix_length(const std::vector<double>& x, long target, Rng& rng) {
  if (target <= 0) throw std::invalid_argument("fix_length: target must be positive");
  if (x.empty()) throw std::invalid_argument("fix_length: empty input");
  const long n = static_cast<long>(x.size());
  std::vector<double> out(static_cast<std::size_t>(target));
  if (n >= target) {
    const long start = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n - target + 1)));
    for (long i = 0; i < target; ++i)
      out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(start + i)];
  } else {
    const long start = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
    for (long i = 0; i < target; ++i)
      out[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>((start + i) % n)];
  }
  return out;
}

struct MixResult {
  std::vector<double> noisy, clean;
  double gain = 0.0;        // noise scale before the joint clamp
  double peak_scale = 1.0;  // joint rescale applied to both outputs
  double measured_snr = 0.0;
};

// Scales the noise so that 20*log10(rms(clean)/rms(gain*noise)) equals the
// requested SNR, then rescales mixture and clean together if either would
// clip. The joint rescale keeps the realized SNR exact.
inline MixResult mix_pair(const std::vector<double>& clean, const std::vector<double>& noise,
                          double snr_db) {
  if (clean.size() != noise.size())
    throw std::invalid_argument("mix: clean and noise lengths differ");
  if (!std::isfinite(snr_db) || snr_db < -60.0 || snr_db > 80.0)
    throw std::invalid_argument("mix: SNR out of range");
  const double rms_c = rms(clean);
  const double rms_n = rms(noise);
  if (rms_c <= 0.0) throw std::invalid_argument("mix: clean signal is silent");
  if (rms_n <= 0.0) throw std::invalid_argument("mix: noise signal is silent");

  MixResult r;
  r.gain = (rms_c / rms_n) * std::pow(10.0, -snr_db / 20.0);
  r.noisy.resize(clean.size());
  r.clean = clean;
  double peak = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    r.noisy[i] = clean[i] + r.gain * noise[i];
    peak = std::max(peak, std::max(std::fabs(r.noisy[i]), std::fabs(r.clean[i])));
  }
  if (peak > 0.999) {
    r.peak_scale = 0.999 / peak;
    for (std::size_t i = 0; i < clean.size(); ++i) {
      r.noisy[i] *= r.peak_scale;
      r.clean[i] *= r.peak_scale;
    }
  }
  std::vector<double> residual(clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) residual[i] = r.noisy[i] - r.clean[i];
  r.measured_snr = 20.0 * std::log10(rms(r.clean) / rms(residual));
  return r;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

inline constexpr const char* kManifestHeader = "clean,noise,snr_db,out_noisy,out_clean";

struct ManifestRow {
  std::string clean, noise;
  double snr_db = 0.0;
  std::string out_noisy, out_clean;
};

inline std::vector<ManifestRow> parse_manifest(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw protocol_error("manifest: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw protocol_error("manifest: header must be exactly '" + std::string(kManifestHeader) +
                         "', got '" + line + "'");
  std::vector<ManifestRow> rows;
  long lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != 5)
      throw protocol_error("manifest line " + std::to_string(lineno) + ": expected 5 fields, got " +
                           std::to_string(fields.size()));
    ManifestRow row;
    row.clean = fields[0];
    row.noise = fields[1];
    try {
      std::size_t used = 0;
      row.snr_db = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw protocol_error("manifest line " + std::to_string(lineno) + ": bad snr_db '" +
                           fields[2] + "'");
    }
    row.out_noisy = fields[3];
    row.out_clean = fields[4];
    for (const std::string* f : {&row.clean, &row.noise, &row.out_noisy, &row.out_clean})
      if (f->empty())
        throw protocol_error("manifest line " + std::to_string(lineno) + ": empty path field");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<ManifestRow> parse_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open manifest: " + path.string());
  return parse_manifest(is);
}

// ---------------------------------------------------------------------------
// dataset build
// ---------------------------------------------------------------------------

struct MixOptions {
  std::uint64_t seed = 1;
  double fix_seconds = 8.0;
};

struct RowResult {
  long row = 0;  // 0-based position in the manifest
  bool ok = false;
  std::string message;
  double requested_snr = 0.0;
  double measured_snr = 0.0;
};

struct DatasetReport {
  long total = 0, succeeded = 0, failed = 0;
  std::vector<RowResult> rows;
};

// Input paths resolve against the manifest's directory, output paths against
// out_dir. Each row draws its randomness from (seed, row index) only, so a
// rerun reproduces every output byte for byte regardless of row order or
// earlier failures.
inline DatasetReport build_dataset(const std::filesystem::path& manifest_path,
                                   const std::filesystem::path& out_dir, const MixOptions& opt) {
  const std::vector<ManifestRow> rows = parse_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  DatasetReport report;
  report.total = static_cast<long>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ManifestRow& row = rows[i];
    RowResult rr;
    rr.row = static_cast<long>(i);
    rr.requested_snr = row.snr_db;
    try {
      Rng rng(derive_seed(opt.seed, static_cast<std::uint64_t>(i)));
      const Waveform clean = signal::read_wav(base / row.clean);
      const Waveform noise = signal::read_wav(base / row.noise);
      const long target = std::lround(opt.fix_seconds * clean.sample_rate);
      const std::vector<double> c = fix_length(clean.samples, target, rng);
      const std::vector<double> n = fix_length(noise.samples, target, rng);
      MixResult mix = mix_pair(c, n, row.snr_db);
      const std::filesystem::path noisy_path = out_dir / row.out_noisy;
      const std::filesystem::path clean_path = out_dir / row.out_clean;
      std::filesystem::create_directories(noisy_path.parent_path());
      std::filesystem::create_directories(clean_path.parent_path());
      signal::write_wav(noisy_path, {mix.noisy, clean.sample_rate});
      signal::write_wav(clean_path, {mix.clean, clean.sample_rate});
      rr.ok = true;
      rr.measured_snr = mix.measured_snr;
      ++report.succeeded;
    } catch (const std::exception& e) {
      rr.ok = false;
      rr.message = e.what();
      ++report.failed;
    }
    report.rows.push_back(std::move(rr));
  }
  return report;
}

}  // namespace darccn::data
