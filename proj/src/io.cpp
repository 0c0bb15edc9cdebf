#include "srlfi/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <sstream>
#include <tuple>

#include <boost/crc.hpp>

#include "srlfi/errors.hpp"

namespace srlfi {

namespace fs = std::filesystem;

namespace {

constexpr char kDatasetMagic[8] = {'S', 'R', 'L', 'F', 'I', '-', 'D', 'S'};
constexpr char kCheckpointMagic[8] = {'S', 'R', 'L', 'F', 'I', '-', 'C', 'K'};

class Writer {
public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void size(std::size_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> v) {
    size(v.size());
    for (double x : v) f64(x);
  }
  void sizes(std::span<const std::size_t> v) {
    size(v.size());
    for (auto x : v) size(x);
  }

  std::vector<std::uint8_t>& buffer() { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  Reader(std::span<const std::uint8_t> data, std::string what) : data_(data), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return data_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t size(std::uint64_t limit = std::uint64_t{1} << 40) {
    const std::uint64_t v = u64();
    if (v > limit) throw FormatError(what_ + ": implausible length " + std::to_string(v));
    return static_cast<std::size_t>(v);
  }
  std::vector<double> f64s() {
    const std::size_t n = size(remaining() / 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> sizes() {
    const std::size_t n = size(remaining() / 8);
    std::vector<std::size_t> v(n);
    for (auto& x : v) x = size();
    return v;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": file is truncated");
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string what_;
};

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

void check_magic(Reader& r, const char (&magic)[8], const std::string& what) {
  char got[8];
  r.bytes(got, 8);
  if (std::memcmp(got, magic, 8) != 0) throw FormatError(what + ": bad magic, not a " + what);
}

}  // namespace

// --- datasets ---------------------------------------------------------------

void save_dataset(const Dataset& data, const fs::path& path) {
  Writer w;
  w.bytes(kDatasetMagic, 8);
  w.u32(kDatasetVersion);
  w.str(data.model);
  w.size(data.size());
  w.size(data.parameter_dim());
  w.size(data.data_dim());
  w.u64(data.seed);
  for (double v : data.theta.values()) w.f64(v);
  for (double v : data.y.values()) w.f64(v);
  write_file(path, w.buffer());
}

Dataset load_dataset(const fs::path& path) {
  const auto bytes = read_file(path);
  Reader r(bytes, "dataset " + path.string());
  check_magic(r, kDatasetMagic, "dataset");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion)
    throw VersionError("dataset " + path.string() + ": format version " + std::to_string(version) +
                       " is not supported (expected " + std::to_string(kDatasetVersion) + ")");
  Dataset data;
  data.model = r.str();
  const std::size_t n = r.size(), p = r.size(), d = r.size();
  data.seed = r.u64();
  if (n == 0 || p == 0 || d == 0) throw FormatError("dataset " + path.string() + ": empty dimensions");
  if (r.remaining() != 8 * n * (p + d))
    throw FormatError("dataset " + path.string() + ": expected " + std::to_string(8 * n * (p + d)) +
                      " bytes of values, found " + std::to_string(r.remaining()));
  data.theta = Tensor({n, p});
  data.y = Tensor({n, d});
  for (double& v : data.theta.values()) v = r.f64();
  for (double& v : data.y.values()) v = r.f64();
  return data;
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
  const std::size_t p = data.parameter_dim(), d = data.data_dim();
  for (std::size_t c = 0; c < p; ++c) out << (c ? "," : "") << "theta_" << c;
  for (std::size_t c = 0; c < d; ++c) out << ",y_" << c;
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < p; ++c) out << (c ? "," : "") << format_double(data.theta.at(i, c));
    for (std::size_t c = 0; c < d; ++c) out << ',' << format_double(data.y.at(i, c));
    out << '\n';
  }
}

// --- checkpoints ------------------------------------------------------------

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer payload;
  const auto& arch = ck.generator.arch;
  payload.size(arch.input_dim);
  payload.sizes(arch.hidden);
  payload.size(arch.activations.size());
  for (auto a : arch.activations) payload.str(to_string(a));
  payload.size(arch.output_dim);
  payload.u8(static_cast<std::uint8_t>(arch.output.kind));
  payload.f64s(arch.output.low);
  payload.f64s(arch.output.high);
  payload.f64s(arch.output.scale);
  payload.f64s(arch.output.shift);
  payload.size(ck.generator.latent.dim);
  payload.str(to_string(ck.generator.latent.family));

  payload.size(ck.generator.weights.size());
  for (const auto& w : ck.generator.weights) {
    payload.sizes(w.shape());
    for (double v : w.values()) payload.f64(v);
  }

  payload.str(ck.summary.method);
  payload.str(ck.summary.rule);
  payload.size(ck.summary.epochs_run);
  payload.size(ck.summary.best_epoch);
  payload.u8(ck.summary.stopped_early ? 1 : 0);
  payload.f64(ck.summary.final_train_loss);
  payload.f64(ck.summary.final_val_loss);
  payload.u64(ck.config_hash);

  Writer out;
  out.bytes(kCheckpointMagic, 8);
  out.u32(ck.version);
  out.size(payload.buffer().size());
  out.bytes(payload.buffer().data(), payload.buffer().size());
  out.u32(crc32(payload.buffer()));
  return std::move(out.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader head(bytes, "checkpoint");
  check_magic(head, kCheckpointMagic, "checkpoint");
  Checkpoint ck;
  ck.version = head.u32();
  if (ck.version != kCheckpointVersion)
    throw VersionError("checkpoint: format version " + std::to_string(ck.version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t length = head.u64();
  if (head.remaining() < 4 || length > head.remaining() - 4) throw FormatError("checkpoint: file is truncated");
  if (length != head.remaining() - 4) throw FormatError("checkpoint: trailing bytes after payload");
  const auto payload_bytes = bytes.subspan(bytes.size() - head.remaining(), length);
  Reader tail(bytes.subspan(bytes.size() - 4), "checkpoint");
  if (tail.u32() != crc32(payload_bytes)) throw FormatError("checkpoint: digest mismatch, file is corrupted");

  Reader r(payload_bytes, "checkpoint");
  auto& arch = ck.generator.arch;
  arch.input_dim = r.size();
  arch.hidden = r.sizes();
  const std::size_t n_act = r.size(arch.hidden.size());
  for (std::size_t i = 0; i < n_act; ++i) arch.activations.push_back(parse_activation(r.str()));
  arch.output_dim = r.size();
  const std::uint8_t kind = r.u8();
  if (kind > static_cast<std::uint8_t>(OutputTransform::Kind::affine))
    throw FormatError("checkpoint: unknown output transform " + std::to_string(kind));
  arch.output.kind = static_cast<OutputTransform::Kind>(kind);
  arch.output.low = r.f64s();
  arch.output.high = r.f64s();
  arch.output.scale = r.f64s();
  arch.output.shift = r.f64s();
  ck.generator.latent.dim = r.size();
  ck.generator.latent.family = parse_latent_family(r.str());

  const std::size_t n_weights = r.size(r.remaining());
  for (std::size_t i = 0; i < n_weights; ++i) {
    const Shape shape = r.sizes();
    Tensor w(shape);
    for (double& v : w.values()) v = r.f64();
    ck.generator.weights.push_back(std::move(w));
  }

  ck.summary.method = r.str();
  ck.summary.rule = r.str();
  ck.summary.epochs_run = r.size();
  ck.summary.best_epoch = r.size();
  ck.summary.stopped_early = r.u8() != 0;
  ck.summary.final_train_loss = r.f64();
  ck.summary.final_val_loss = r.f64();
  ck.config_hash = r.u64();
  if (r.remaining() != 0) throw FormatError("checkpoint: unexpected bytes at end of payload");

  arch.validate();
  const Weights expected = init_network(arch, 0);
  if (expected.size() != ck.generator.weights.size())
    throw FormatError("checkpoint: weight count does not match the architecture");
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (expected[i].shape() != ck.generator.weights[i].shape())
      throw FormatError("checkpoint: weight " + std::to_string(i) + " has shape " +
                        shape_string(ck.generator.weights[i].shape()) + ", expected " +
                        shape_string(expected[i].shape()));
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const fs::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const VersionError& e) {
    throw VersionError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// --- metric reports ---------------------------------------------------------

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

std::vector<MetricRow> report_rows(const MetricsReport& rep) {
  std::vector<MetricRow> rows;
  auto add = [&](const std::string& metric, const std::string& component, double value) {
    rows.push_back({rep.method, rep.model, rep.n_train, rep.m, metric, component, value});
  };
  auto per_component = [&](const std::string& metric, const std::vector<double>& values, double mean) {
    for (std::size_t c = 0; c < values.size(); ++c) add(metric, std::to_string(c), values[c]);
    add(metric, "mean", mean);
  };
  per_component("nrmse", rep.nrmse, rep.mean_nrmse);
  per_component("r2", rep.r2, rep.mean_r2);
  per_component("calibration_error", rep.calibration, rep.mean_calibration);
  add("early_stop_epoch", "-", static_cast<double>(rep.early_stop_epoch));
  return rows;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "method,model,n_train,m,metric,component,value\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.model << ',' << r.n_train << ',' << r.m << ',' << r.metric << ',' << r.component
        << ',' << format_double(r.value) << '\n';
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream s(line);
  while (std::getline(s, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("metrics csv: bad number '" + s + "'");
  return v;
}

std::size_t parse_size(const std::string& s) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw FormatError("metrics csv: bad integer '" + s + "'");
  return v;
}

}  // namespace

std::vector<MetricRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "method,model,n_train,m,metric,component,value")
    throw FormatError("metrics csv: unexpected header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 7) throw FormatError("metrics csv: expected 7 fields in '" + line + "'");
    rows.push_back({f[0], f[1], parse_size(f[2]), parse_size(f[3]), f[4], f[5], parse_double(f[6])});
  }
  return rows;
}

std::vector<SummaryRow> summarize(std::span<const std::vector<MetricRow>> runs) {
  using Key = std::tuple<std::string, std::string, std::size_t, std::size_t, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& run : runs)
    for (const auto& r : run) groups[{r.method, r.model, r.n_train, r.m, r.metric, r.component}].push_back(r.value);
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    std::tie(s.method, s.model, s.n_train, s.m, s.metric, s.component) = key;
    s.runs = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
      double sq = 0.0;
      for (double v : values) sq += (v - s.mean) * (v - s.mean);
      s.sd = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
  out << "method,model,n_train,m,metric,component,mean,sd,runs\n";
  for (const auto& r : rows)
    out << r.method << ',' << r.model << ',' << r.n_train << ',' << r.m << ',' << r.metric << ',' << r.component
        << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ',' << r.runs << '\n';
}

void write_summary_table(std::ostream& out, std::span<const SummaryRow> rows) {
  out << std::left << std::setw(16) << "method" << std::setw(20) << "model" << std::setw(9) << "n_train"
      << std::setw(5) << "m" << std::setw(20) << "metric"
      << "mean +- sd (runs)\n";
  for (const auto& r : rows) {
    if (r.component != "mean" && r.component != "-") continue;
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(4) << r.mean << " +- " << r.sd << " (" << r.runs << ")";
    out << std::left << std::setw(16) << r.method << std::setw(20) << r.model << std::setw(9) << r.n_train
        << std::setw(5) << r.m << std::setw(20) << r.metric << cell.str() << '\n';
  }
}

std::vector<SummaryRow> emit_report(std::span<const std::vector<MetricRow>> runs, const fs::path& dir) {
  if (runs.empty()) throw std::invalid_argument("emit_report: no runs");
  fs::create_directories(dir);
  std::vector<MetricRow> all;
  for (const auto& run : runs) all.insert(all.end(), run.begin(), run.end());
  {
    std::ofstream out(dir / "report.csv");
    write_metrics_csv(out, all);
  }
  const auto summary = summarize(runs);
  {
    std::ofstream out(dir / "summary.csv");
    write_summary_csv(out, summary);
  }
  {
    std::ofstream out(dir / "summary.txt");
    write_summary_table(out, summary);
  }
  return summary;
}

}  // namespace srlfi
