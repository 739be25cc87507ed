#include "lidarbg/point_cloud_io.hpp"

#include <cmath>
#include <sstream>

#include "lidarbg/binary_io.hpp"
#include "lidarbg/csv.hpp"
#include "lidarbg/error.hpp"

namespace lidarbg {

PointRecord PointRecord::spherical(std::uint64_t frame, int beam, double azimuth, double range,
                                   double intensity) {
  PointRecord p;
  p.frame_id = frame;
  p.beam_id = beam;
  p.azimuth_deg = azimuth;
  p.range_m = range;
  p.intensity = intensity;
  p.flag = ReturnFlag::Return;
  return p;
}

PointRecord PointRecord::cartesian(std::uint64_t frame, int beam, double azimuth,
                                   std::array<double, 3> xyz, double intensity) {
  PointRecord p;
  p.frame_id = frame;
  p.beam_id = beam;
  p.azimuth_deg = azimuth;
  p.xyz = xyz;
  p.intensity = intensity;
  p.flag = ReturnFlag::Return;
  return p;
}

PointRecord PointRecord::no_return(std::uint64_t frame, int beam, double azimuth) {
  PointRecord p;
  p.frame_id = frame;
  p.beam_id = beam;
  p.azimuth_deg = azimuth;
  p.flag = ReturnFlag::NoReturn;
  return p;
}

FrameFormat parse_frame_format(std::string_view name) {
  if (name == "csv") return FrameFormat::Csv;
  if (name == "binary" || name == "bin") return FrameFormat::Binary;
  throw ConfigError("unknown frame format '" + std::string(name) + "' (expected csv or binary)");
}

std::string_view to_string(FrameFormat format) {
  return format == FrameFormat::Csv ? "csv" : "binary";
}

void validate_record(const PointRecord& r, std::size_t row, const IoOptions& options) {
  if (r.beam_id < 0) throw FormatError(row, "negative beam_id");
  if (!std::isfinite(r.azimuth_deg) || !(r.azimuth_deg > 0.0 && r.azimuth_deg <= 360.0)) {
    throw FormatError(row, "azimuth_deg outside (0, 360]");
  }
  if (r.is_return()) {
    if (r.range_m.has_value() == r.xyz.has_value()) {
      throw FormatError(row, "return must carry exactly one of range_m or x,y,z");
    }
    if (r.range_m && (!std::isfinite(*r.range_m) || *r.range_m < 0.0)) {
      throw FormatError(row, "range_m must be finite and >= 0");
    }
    if (r.xyz) {
      for (double c : *r.xyz) {
        if (!std::isfinite(c)) throw FormatError(row, "non-finite coordinate");
      }
    }
    if (!r.intensity) throw FormatError(row, "return without intensity");
    if (!std::isfinite(*r.intensity) || *r.intensity < 0.0 || *r.intensity > options.max_intensity) {
      throw FormatError(row, "intensity outside [0, " + csv::format_double(options.max_intensity) + "]");
    }
  } else if (r.range_m || r.xyz || r.intensity) {
    throw FormatError(row, "no-return record carries measurement fields");
  }
}

namespace {

constexpr std::string_view kFlagReturn = "return";
constexpr std::string_view kFlagNoReturn = "no_return";

// Tracks ordering invariants shared by both readers.
class FrameOrder {
 public:
  void check(const Frame& f, std::size_t row) {
    if (last_id_ && f.frame_id <= *last_id_) {
      throw NonMonotonicFrameId("frame_id " + std::to_string(f.frame_id) + " at row " + std::to_string(row) +
                                " does not follow frame_id " + std::to_string(*last_id_));
    }
    if (last_ts_ && !(f.timestamp > *last_ts_)) {
      throw FormatError(row, "timestamp does not strictly increase across frames");
    }
    last_id_ = f.frame_id;
    last_ts_ = f.timestamp;
  }

 private:
  std::optional<std::uint64_t> last_id_;
  std::optional<double> last_ts_;
};

struct CsvRow {
  std::uint64_t frame_id = 0;
  double timestamp = 0.0;
  std::optional<PointRecord> record;  // empty for an empty-frame marker row
  std::size_t line = 0;
};

class CsvFrameReader final : public FrameReader {
 public:
  CsvFrameReader(std::unique_ptr<std::istream> in, IoOptions options)
      : in_(std::move(in)), options_(options) {}

  std::optional<Frame> next() override {
    if (!pending_) pending_ = read_row();
    if (!pending_) return std::nullopt;

    Frame frame;
    frame.frame_id = pending_->frame_id;
    frame.timestamp = pending_->timestamp;
    const std::size_t first_line = pending_->line;
    bool marker_seen = false;
    while (pending_ && pending_->frame_id == frame.frame_id) {
      if (pending_->timestamp != frame.timestamp) {
        throw FormatError(pending_->line, "timestamp differs within frame");
      }
      if (pending_->record) {
        if (marker_seen) throw FormatError(pending_->line, "point row after empty-frame marker");
        frame.points.push_back(std::move(*pending_->record));
      } else {
        if (!frame.points.empty() || marker_seen) {
          throw FormatError(pending_->line, "empty-frame marker in non-empty frame");
        }
        marker_seen = true;
      }
      pending_ = read_row();
    }
    order_.check(frame, first_line);
    return frame;
  }

 private:
  std::optional<CsvRow> read_row() {
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_no_;
      const auto trimmed = csv::trim(line);
      if (trimmed.empty()) continue;
      if (line_no_ == 1 && trimmed.starts_with("frame_id")) continue;
      return parse(trimmed);
    }
    if (in_->bad()) throw IoError("read error at line " + std::to_string(line_no_));
    return std::nullopt;
  }

  CsvRow parse(std::string_view line) const {
    const auto f = csv::split(line);
    if (f.size() != 10) throw FormatError(line_no_, "expected 10 fields, got " + std::to_string(f.size()));
    CsvRow row;
    row.line = line_no_;
    const auto frame_id = csv::parse_uint(f[0]);
    if (!frame_id) throw FormatError(line_no_, "bad frame_id");
    const auto ts = csv::parse_double(f[1]);
    if (!ts) throw FormatError(line_no_, "bad timestamp");
    row.frame_id = *frame_id;
    row.timestamp = *ts;

    bool rest_empty = true;
    for (std::size_t i = 2; i < f.size(); ++i) rest_empty = rest_empty && csv::trim(f[i]).empty();
    if (rest_empty) return row;

    PointRecord r;
    r.frame_id = *frame_id;
    const auto beam = csv::parse_int(f[2]);
    if (!beam || *beam < 0 || *beam > std::numeric_limits<int>::max()) {
      throw FormatError(line_no_, "bad beam_id");
    }
    r.beam_id = static_cast<int>(*beam);
    const auto az = csv::parse_double(f[3]);
    if (!az) throw FormatError(line_no_, "bad azimuth_deg");
    r.azimuth_deg = *az;

    auto optional_field = [&](std::string_view field, const char* name) -> std::optional<double> {
      if (csv::trim(field).empty()) return std::nullopt;
      const auto v = csv::parse_double(field);
      if (!v) throw FormatError(line_no_, std::string("bad ") + name);
      return v;
    };
    r.range_m = optional_field(f[4], "range_m");
    const auto x = optional_field(f[5], "x");
    const auto y = optional_field(f[6], "y");
    const auto z = optional_field(f[7], "z");
    const int present = int(x.has_value()) + int(y.has_value()) + int(z.has_value());
    if (present != 0 && present != 3) throw FormatError(line_no_, "partial x,y,z");
    if (present == 3) r.xyz = std::array<double, 3>{*x, *y, *z};
    r.intensity = optional_field(f[8], "intensity");

    const auto flag = csv::trim(f[9]);
    if (flag == kFlagReturn) {
      r.flag = ReturnFlag::Return;
    } else if (flag == kFlagNoReturn) {
      r.flag = ReturnFlag::NoReturn;
    } else {
      throw FormatError(line_no_, "bad return_flag '" + std::string(flag) + "'");
    }
    validate_record(r, line_no_, options_);
    row.record = std::move(r);
    return row;
  }

  std::unique_ptr<std::istream> in_;
  IoOptions options_;
  std::size_t line_no_ = 0;
  std::optional<CsvRow> pending_;
  FrameOrder order_;
};

// Binary layout, all little-endian:
//   magic[8]
//   repeated block: u32 payload_size, payload
//   payload: u64 frame_id, f64 timestamp, u32 n_points, n * point
//   point:   i32 beam_id, f64 azimuth_deg, u8 flags, [f64 range], [3 x f64 xyz], [f64 intensity]
enum PointFlags : std::uint8_t { kIsReturn = 1, kHasRange = 2, kHasXyz = 4, kHasIntensity = 8 };

class BinaryFrameReader final : public FrameReader {
 public:
  BinaryFrameReader(std::unique_ptr<std::istream> in, IoOptions options)
      : in_(std::move(in)), options_(options) {}

  std::optional<Frame> next() override {
    if (!header_checked_) {
      header_checked_ = true;
      std::array<char, 8> magic{};
      if (!bin::read_exact(*in_, magic.data(), magic.size())) return std::nullopt;
      if (magic != kFrameBinaryMagic) {
        if (std::equal(magic.begin(), magic.begin() + 6, kFrameBinaryMagic.begin())) {
          throw VersionMismatch("unsupported binary frame format version");
        }
        throw FormatError(0, "bad magic header");
      }
    }
    std::array<std::uint8_t, 4> size_bytes{};
    if (!bin::read_exact(*in_, size_bytes.data(), size_bytes.size())) return std::nullopt;
    ++block_;
    const auto size = bin::Reader(size_bytes.data(), 4).get<std::uint32_t>();
    buffer_.resize(size);
    try {
      if (size > 0 && !bin::read_exact(*in_, buffer_.data(), size)) {
        throw FormatError(block_, "truncated frame block");
      }
    } catch (const FormatError&) {
      throw FormatError(block_, "truncated frame block");
    }

    bin::Reader r(buffer_);
    Frame frame;
    try {
      frame.frame_id = r.get<std::uint64_t>();
      frame.timestamp = r.get_double();
      const auto n = r.get<std::uint32_t>();
      frame.points.reserve(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        PointRecord p;
        p.frame_id = frame.frame_id;
        p.beam_id = r.get<std::int32_t>();
        p.azimuth_deg = r.get_double();
        const auto flags = r.get<std::uint8_t>();
        p.flag = (flags & kIsReturn) ? ReturnFlag::Return : ReturnFlag::NoReturn;
        if (flags & kHasRange) p.range_m = r.get_double();
        if (flags & kHasXyz) {
          std::array<double, 3> xyz{};
          for (auto& c : xyz) c = r.get_double();
          p.xyz = xyz;
        }
        if (flags & kHasIntensity) p.intensity = r.get_double();
        validate_record(p, block_, options_);
        frame.points.push_back(std::move(p));
      }
    } catch (const FormatError& e) {
      throw FormatError(block_, e.reason());
    }
    if (r.remaining() != 0) throw FormatError(block_, "trailing bytes in frame block");
    if (!std::isfinite(frame.timestamp)) throw FormatError(block_, "non-finite timestamp");
    order_.check(frame, block_);
    return frame;
  }

 private:
  std::unique_ptr<std::istream> in_;
  IoOptions options_;
  bool header_checked_ = false;
  std::size_t block_ = 0;
  std::vector<std::uint8_t> buffer_;
  FrameOrder order_;
};

void write_csv_frame(std::ostream& out, const Frame& frame) {
  const std::string prefix = std::to_string(frame.frame_id) + "," + csv::format_double(frame.timestamp) + ",";
  if (frame.points.empty()) {
    out << prefix << ",,,,,,,\n";
    return;
  }
  std::string line;
  for (const auto& p : frame.points) {
    line = prefix;
    line += std::to_string(p.beam_id);
    line += ',';
    line += csv::format_double(p.azimuth_deg);
    line += ',';
    if (p.range_m) line += csv::format_double(*p.range_m);
    line += ',';
    for (int i = 0; i < 3; ++i) {
      if (p.xyz) line += csv::format_double((*p.xyz)[static_cast<std::size_t>(i)]);
      line += ',';
    }
    if (p.intensity) line += csv::format_double(*p.intensity);
    line += ',';
    line += p.is_return() ? kFlagReturn : kFlagNoReturn;
    line += '\n';
    out << line;
  }
}

void write_binary_frame(std::ostream& out, const Frame& frame) {
  bin::Writer w;
  w.put(frame.frame_id);
  w.put(frame.timestamp);
  w.put(static_cast<std::uint32_t>(frame.points.size()));
  for (const auto& p : frame.points) {
    w.put(static_cast<std::int32_t>(p.beam_id));
    w.put(p.azimuth_deg);
    std::uint8_t flags = 0;
    if (p.is_return()) flags |= kIsReturn;
    if (p.range_m) flags |= kHasRange;
    if (p.xyz) flags |= kHasXyz;
    if (p.intensity) flags |= kHasIntensity;
    w.put(flags);
    if (p.range_m) w.put(*p.range_m);
    if (p.xyz) {
      for (double c : *p.xyz) w.put(c);
    }
    if (p.intensity) w.put(*p.intensity);
  }
  bin::Writer block;
  block.put(static_cast<std::uint32_t>(w.bytes().size()));
  block.flush_to(out);
  w.flush_to(out);
}

}  // namespace

std::unique_ptr<FrameReader> make_frame_reader(std::unique_ptr<std::istream> stream, FrameFormat format,
                                               const IoOptions& options) {
  if (format == FrameFormat::Csv) return std::make_unique<CsvFrameReader>(std::move(stream), options);
  return std::make_unique<BinaryFrameReader>(std::move(stream), options);
}

std::unique_ptr<FrameReader> open_frame_reader(const std::filesystem::path& path, FrameFormat format,
                                               const IoOptions& options) {
  auto mode = std::ios::in;
  if (format == FrameFormat::Binary) mode |= std::ios::binary;
  auto in = std::make_unique<std::ifstream>(path, mode);
  if (!*in) throw IoError("cannot open '" + path.string() + "' for reading");
  return make_frame_reader(std::move(in), format, options);
}

std::vector<Frame> read_frames(const std::filesystem::path& path, FrameFormat format, const IoOptions& options) {
  auto reader = open_frame_reader(path, format, options);
  std::vector<Frame> frames;
  while (auto f = reader->next()) frames.push_back(std::move(*f));
  return frames;
}

FrameWriter::FrameWriter(const std::filesystem::path& path, FrameFormat format) : format_(format) {
  auto mode = std::ios::out | std::ios::trunc;
  if (format == FrameFormat::Binary) mode |= std::ios::binary;
  auto out = std::make_unique<std::ofstream>(path, mode);
  if (!*out) throw IoError("cannot open '" + path.string() + "' for writing");
  out_ = std::move(out);
}

FrameWriter::FrameWriter(std::unique_ptr<std::ostream> stream, FrameFormat format)
    : out_(std::move(stream)), format_(format) {}

FrameWriter::~FrameWriter() {
  try {
    close();
  } catch (...) {
  }
}

void FrameWriter::write(const Frame& frame) {
  if (!out_) throw IoError("writer is closed");
  if (last_frame_id_ && frame.frame_id <= *last_frame_id_) {
    throw NonMonotonicFrameId("frames must be written in ascending frame_id order");
  }
  for (const auto& p : frame.points) {
    if (p.frame_id != frame.frame_id) throw FormatError(0, "point frame_id differs from its frame");
  }
  if (!header_written_) {
    header_written_ = true;
    if (format_ == FrameFormat::Csv) {
      *out_ << kFrameCsvHeader << '\n';
    } else {
      out_->write(kFrameBinaryMagic.data(), kFrameBinaryMagic.size());
    }
  }
  if (format_ == FrameFormat::Csv) {
    write_csv_frame(*out_, frame);
  } else {
    write_binary_frame(*out_, frame);
  }
  if (!*out_) throw IoError("write failed");
  last_frame_id_ = frame.frame_id;
}

void FrameWriter::close() {
  if (!out_) return;
  out_->flush();
  const bool ok = static_cast<bool>(*out_);
  out_.reset();
  if (!ok) throw IoError("flush failed");
}

void write_frames(std::span<const Frame> frames, const std::filesystem::path& path, FrameFormat format) {
  FrameWriter writer(path, format);
  for (const auto& f : frames) writer.write(f);
  writer.close();
}

}  // namespace lidarbg
