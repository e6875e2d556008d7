#include "evstab/io.hpp"

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "evstab/errors.hpp"

namespace evstab {

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream f(path, mode);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

bool parse_fields(const std::string& line, double* out, int n) {
  const char* s = line.c_str();
  char* end = nullptr;
  for (int i = 0; i < n; ++i) {
    out[i] = std::strtod(s, &end);
    if (end == s) return false;
    s = end;
  }
  while (*s && std::isspace(static_cast<unsigned char>(*s))) ++s;
  return *s == '\0';
}

bool blank(const std::string& line) {
  for (char c : line)
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  return true;
}

}  // namespace

std::vector<Event> read_events(const std::string& path) {
  auto f = open_in(path);
  std::vector<Event> events;
  std::string line;
  std::size_t lineno = 0;
  double prev_t = -1e300;
  double fields[4];
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line)) continue;
    if (!parse_fields(line, fields, 4)) throw ParseError("bad event line", lineno);
    Event e;
    e.t = fields[0];
    e.x = fields[1];
    e.y = fields[2];
    const int p = static_cast<int>(fields[3]);
    if (p != 0 && p != 1 && p != -1) throw ParseError("polarity must be 0 or 1", lineno);
    e.p = (p == 0) ? -1 : (p == -1 ? -1 : 1);
    if (e.t < prev_t - 1e-6)
      throw NonMonotonicTimestamps("timestamp regressed by more than 1 us at line " +
                                   std::to_string(lineno));
    prev_t = std::max(prev_t, e.t);
    events.push_back(e);
  }
  return events;
}

void write_events(const std::vector<Event>& events, const std::string& path) {
  auto f = open_out(path);
  char buf[128];
  for (const Event& e : events) {
    const int p = e.p > 0 ? 1 : 0;
    if (e.x == std::floor(e.x) && e.y == std::floor(e.y)) {
      std::snprintf(buf, sizeof(buf), "%.9f %d %d %d\n", e.t, static_cast<int>(e.x),
                    static_cast<int>(e.y), p);
    } else {
      std::snprintf(buf, sizeof(buf), "%.9f %.6f %.6f %d\n", e.t, e.x, e.y, p);
    }
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

CameraModel read_calib(const std::string& path) {
  auto f = open_in(path);
  std::string line1, line2;
  if (!std::getline(f, line1)) throw ParseError("missing intrinsics line", 1);
  if (!std::getline(f, line2)) throw ParseError("missing size line", 2);
  double intr[9], size[2];
  if (!parse_fields(line1, intr, 9)) throw ParseError("bad intrinsics line", 1);
  if (!parse_fields(line2, size, 2)) throw ParseError("bad size line", 2);
  if (intr[0] <= 0 || intr[1] <= 0) throw InvalidCalibration("non-positive focal length");
  return CameraModel(intr[0], intr[1], intr[2], intr[3], static_cast<int>(size[0]),
                     static_cast<int>(size[1]), intr[4], intr[5], intr[6], intr[7], intr[8]);
}

void write_calib(const CameraModel& c, const std::string& path) {
  auto f = open_out(path);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n%d %d\n",
                c.fx, c.fy, c.cx, c.cy, c.k1, c.k2, c.p1, c.p2, c.k3, c.width, c.height);
  f << buf;
  if (!f) throw IoError("write failed: " + path);
}

std::vector<PoseSample> read_poses(const std::string& path) {
  auto f = open_in(path);
  std::vector<PoseSample> poses;
  std::string line;
  std::size_t lineno = 0;
  double v[8];
  double prev_t = -1e300;
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line) || line[0] == '#') continue;
    if (!parse_fields(line, v, 8)) throw ParseError("bad pose line", lineno);
    PoseSample p;
    p.t = v[0];
    p.position = {v[1], v[2], v[3]};
    // disk order qx qy qz qw
    const double n = std::sqrt(v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]);
    if (std::abs(n - 1.0) > 1e-3) throw ParseError("non-unit quaternion", lineno);
    p.orientation = Quat(v[7], v[4], v[5], v[6]);
    if (p.t < prev_t) throw NonMonotonicTimestamps("pose timestamps must be non-decreasing");
    prev_t = p.t;
    poses.push_back(p);
  }
  return poses;
}

void write_poses(const std::vector<PoseSample>& poses, const std::string& path) {
  auto f = open_out(path);
  char buf[384];
  for (const PoseSample& p : poses) {
    std::snprintf(buf, sizeof(buf), "%.9f %.17g %.17g %.17g %.17g %.17g %.17g %.17g\n", p.t,
                  p.position.x(), p.position.y(), p.position.z(), p.orientation.x,
                  p.orientation.y, p.orientation.z, p.orientation.w);
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<ImuSample> read_imu(const std::string& path) {
  auto f = open_in(path);
  std::vector<ImuSample> samples;
  std::string line;
  std::size_t lineno = 0;
  double v[7];
  double prev_t = -1e300;
  while (std::getline(f, line)) {
    ++lineno;
    if (blank(line) || line[0] == '#') continue;
    if (!parse_fields(line, v, 7)) throw ParseError("bad imu line", lineno);
    ImuSample s;
    s.t = v[0];
    s.accel = {v[1], v[2], v[3]};
    s.gyro = {v[4], v[5], v[6]};
    if (s.t < prev_t) throw NonMonotonicTimestamps("imu timestamps must be non-decreasing");
    prev_t = s.t;
    samples.push_back(s);
  }
  return samples;
}

void write_imu(const std::vector<ImuSample>& samples, const std::string& path) {
  auto f = open_out(path);
  char buf[384];
  for (const ImuSample& s : samples) {
    std::snprintf(buf, sizeof(buf), "%.9f %.17g %.17g %.17g %.17g %.17g %.17g\n", s.t,
                  s.accel.x(), s.accel.y(), s.accel.z(), s.gyro.x(), s.gyro.y(), s.gyro.z());
    f << buf;
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace {

// Reads the next whitespace-delimited token, skipping '#' comments.
bool next_pnm_token(std::istream& in, std::string& tok) {
  tok.clear();
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  if (c == EOF) return false;
  tok.push_back(static_cast<char>(c));
  while ((c = in.get()) != EOF && !std::isspace(c)) tok.push_back(static_cast<char>(c));
  return true;
}

}  // namespace

ImageGrid read_pgm(const std::string& path) {
  auto f = open_in(path, std::ios::in | std::ios::binary);
  std::string magic;
  if (!next_pnm_token(f, magic)) throw TruncatedFile("empty file: " + path);
  if (magic != "P2" && magic != "P5") throw UnsupportedFormat("not a P2/P5 graymap: " + magic);

  std::string tok;
  long dims[3];
  for (int i = 0; i < 3; ++i) {
    if (!next_pnm_token(f, tok)) throw TruncatedFile("truncated header: " + path);
    dims[i] = std::strtol(tok.c_str(), nullptr, 10);
  }
  const long w = dims[0], h = dims[1], maxval = dims[2];
  if (w <= 0 || h <= 0) throw UnsupportedFormat("bad dimensions");
  if (maxval != 255 && maxval != 65535) throw UnsupportedFormat("maxval must be 255 or 65535");

  ImageGrid grid(static_cast<int>(w), static_cast<int>(h));
  const std::size_t n = grid.values.size();
  if (magic == "P2") {
    for (std::size_t i = 0; i < n; ++i) {
      if (!next_pnm_token(f, tok)) throw TruncatedFile("truncated pixel data");
      grid.values[i] = std::strtol(tok.c_str(), nullptr, 10) / static_cast<double>(maxval);
    }
  } else {
    // single whitespace byte after maxval already consumed by tokenizer
    if (maxval == 255) {
      std::vector<unsigned char> raw(n);
      f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
      if (static_cast<std::size_t>(f.gcount()) != n) throw TruncatedFile("truncated pixel data");
      for (std::size_t i = 0; i < n; ++i) grid.values[i] = raw[i] / 255.0;
    } else {
      std::vector<unsigned char> raw(2 * n);
      f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(2 * n));
      if (static_cast<std::size_t>(f.gcount()) != 2 * n) throw TruncatedFile("truncated pixel data");
      for (std::size_t i = 0; i < n; ++i) {
        const unsigned v = (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
        grid.values[i] = v / 65535.0;
      }
    }
  }
  return grid;
}

void write_pgm(const ImageGrid& grid, const std::string& path, int maxval) {
  if (maxval != 255 && maxval != 65535) throw UnsupportedFormat("maxval must be 255 or 65535");
  auto f = open_out(path, std::ios::out | std::ios::binary);
  f << "P5\n" << grid.width << " " << grid.height << "\n" << maxval << "\n";
  const std::size_t n = grid.values.size();
  auto quant = [&](double v) {
    v = std::min(1.0, std::max(0.0, v));
    return static_cast<unsigned>(std::lround(v * maxval));
  };
  if (maxval == 255) {
    std::vector<unsigned char> raw(n);
    for (std::size_t i = 0; i < n; ++i) raw[i] = static_cast<unsigned char>(quant(grid.values[i]));
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(n));
  } else {
    std::vector<unsigned char> raw(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const unsigned v = quant(grid.values[i]);
      raw[2 * i] = static_cast<unsigned char>(v >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
    }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(2 * n));
  }
  if (!f) throw IoError("write failed: " + path);
}

namespace {

std::string csv_escape(const std::string& s) {
  const bool needs = s.find_first_of(",\"\n\r") != std::string::npos;
  if (!needs) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

}  // namespace

void write_csv_report(const std::vector<std::vector<std::string>>& rows,
                      const std::vector<std::string>& schema, const std::string& path) {
  auto f = open_out(path);
  for (std::size_t i = 0; i < schema.size(); ++i)
    f << (i ? "," : "") << csv_escape(schema[i]);
  f << "\r\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) f << (i ? "," : "") << csv_escape(row[i]);
    f << "\r\n";
  }
  if (!f) throw IoError("write failed: " + path);
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  auto f = open_in(path, std::ios::in | std::ios::binary);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  int c;
  auto end_field = [&]() {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&]() {
    end_field();
    rows.push_back(row);
    row.clear();
  };
  while ((c = f.get()) != EOF) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (f.peek() == '"') {
          field.push_back('"');
          f.get();
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(static_cast<char>(c));
      }
    } else {
      if (c == '"') in_quotes = true;
      else if (c == ',') end_field();
      else if (c == '\r') {
        if (f.peek() == '\n') f.get();
        end_row();
      } else if (c == '\n') end_row();
      else field.push_back(static_cast<char>(c));
    }
  }
  if (any && (!field.empty() || !row.empty())) end_row();
  return rows;
}

std::string sha1_hex(const std::string& bytes) {
  uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};

  std::string msg = bytes;
  const uint64_t bit_len = uint64_t(bytes.size()) * 8;
  msg.push_back(char(0x80));
  while (msg.size() % 64 != 56) msg.push_back('\0');
  for (int i = 7; i >= 0; --i) msg.push_back(char((bit_len >> (8 * i)) & 0xFF));

  const auto rotl = [](uint32_t v, int s) { return (v << s) | (v >> (32 - s)); };
  uint32_t w[80];
  for (size_t chunk = 0; chunk < msg.size(); chunk += 64) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(msg.data() + chunk);
    for (int i = 0; i < 16; ++i)
      w[i] = uint32_t(p[4 * i]) << 24 | uint32_t(p[4 * i + 1]) << 16 |
             uint32_t(p[4 * i + 2]) << 8 | uint32_t(p[4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

    uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) { f = (b & c) | (~b & d); k = 0x5A827999u; }
      else if (i < 40) { f = b ^ c ^ d; k = 0x6ED9EBA1u; }
      else if (i < 60) { f = (b & c) | (b & d) | (c & d); k = 0x8F1BBCDCu; }
      else { f = b ^ c ^ d; k = 0xCA62C1D6u; }
      const uint32_t tmp = rotl(a, 5) + f + e + k + w[i];
      e = d; d = c; c = rotl(b, 30); b = a; a = tmp;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d; h[4] += e;
  }

  char out[41];
  std::snprintf(out, sizeof(out), "%08x%08x%08x%08x%08x", h[0], h[1], h[2], h[3], h[4]);
  return out;
}

std::string sha1_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return sha1_hex(ss.str());
}

}  // namespace evstab
