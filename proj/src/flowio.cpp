#include "flowins/flowio.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace flowins {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts are unsupported");

namespace {

// --- binary helpers --------------------------------------------------------

class BinReader {
 public:
  BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw ParseError(path + ": cannot open");
    in_.seekg(0, std::ios::end);
    size_ = static_cast<std::uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
  }

  std::uint64_t remaining() const { return size_ - pos_; }
  bool eof() const { return pos_ >= size_; }

  void read_raw(void* dst, std::uint64_t n, const char* what) {
    if (remaining() < n)
      throw ParseError(path_ + ": truncated while reading " + what + ": expected " +
                       std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                       ", got " + std::to_string(remaining()));
    in_.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in_) throw ParseError(path_ + ": read failure at offset " + std::to_string(pos_));
    pos_ += n;
  }

  template <typename T>
  T read(const char* what) {
    T v;
    read_raw(&v, sizeof(T), what);
    return v;
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
  std::uint64_t size_{0};
  std::uint64_t pos_{0};
};

class BinWriter {
 public:
  BinWriter(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw DataError(path + ": cannot open for writing");
  }

  void write_raw(const void* src, std::uint64_t n) {
    out_.write(reinterpret_cast<const char*>(src), static_cast<std::streamsize>(n));
    if (!out_) throw DataError(path_ + ": write failure");
  }

  template <typename T>
  void write(T v) {
    write_raw(&v, sizeof(T));
  }

 private:
  std::string path_;
  std::ofstream out_;
};

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& context) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || end != begin + s.size())
    throw ParseError(context + ": bad number '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct CsvFile {
  std::string path;
  std::vector<std::vector<std::string>> rows;  // excludes header
};

CsvFile read_csv(const std::string& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file, header required");
  if (trim(line) != expected_header)
    throw ParseError(path + ": expected header '" + expected_header + "', got '" +
                     trim(line) + "'");
  CsvFile csv;
  csv.path = path;
  const std::size_t ncols = split(expected_header, ',').size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) continue;
    auto fields = split(t, ',');
    if (fields.size() != ncols)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(ncols) + " fields, got " + std::to_string(fields.size()));
    csv.rows.push_back(std::move(fields));
  }
  return csv;
}

}  // namespace

// --- MC variance -----------------------------------------------------------

void FlowSampleStack::validate() const {
  if (n_mc() < 2) throw InconsistentStack("stack needs at least two samples");
  if (dv_samples.size() != du_samples.size())
    throw InconsistentStack("du/dv sample counts differ");
  const std::size_t plane = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (width <= 0 || height <= 0) throw InconsistentStack("invalid stack dimensions");
  for (const auto& s : du_samples)
    if (s.size() != plane) throw InconsistentStack("du plane size mismatch");
  for (const auto& s : dv_samples)
    if (s.size() != plane) throw InconsistentStack("dv plane size mismatch");
  if (!(t2 > t1)) throw InconsistentStack("stack timestamps not increasing");
}

FlowField flow_variance_from_stack(const FlowSampleStack& stack, double var_floor) {
  stack.validate();
  const int n = stack.n_mc();
  FlowField field;
  field.t1 = stack.t1;
  field.t2 = stack.t2;
  field.width = stack.width;
  field.height = stack.height;
  field.provenance = FlowProvenance::dense_network;
  field.points.resize(static_cast<std::size_t>(stack.width) * stack.height);

  for (int row = 0; row < stack.height; ++row) {
    for (int col = 0; col < stack.width; ++col) {
      const std::size_t i = static_cast<std::size_t>(row) * stack.width + col;
      double mu = 0.0, mv = 0.0;
      for (int k = 0; k < n; ++k) {
        mu += stack.du_samples[k][i];
        mv += stack.dv_samples[k][i];
      }
      mu /= n;
      mv /= n;
      double su = 0.0, sv = 0.0;
      for (int k = 0; k < n; ++k) {
        su += (stack.du_samples[k][i] - mu) * (stack.du_samples[k][i] - mu);
        sv += (stack.dv_samples[k][i] - mv) * (stack.dv_samples[k][i] - mv);
      }
      FlowPoint& p = field.points[i];
      p.u1 = col;
      p.v1 = row;
      p.du = mu;
      p.dv = mv;
      p.var_du = std::max(su / (n - 1), var_floor);
      p.var_dv = std::max(sv / (n - 1), var_floor);
    }
  }
  return field;
}

// --- CSV formats ------------------------------------------------------------

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "t,ax,ay,az,gx,gy,gz\n";
  for (const ImuSample& s : samples) {
    out << fmt_double(s.t) << ',' << fmt_double(s.a_tilde.x()) << ','
        << fmt_double(s.a_tilde.y()) << ',' << fmt_double(s.a_tilde.z()) << ','
        << fmt_double(s.w_tilde.x()) << ',' << fmt_double(s.w_tilde.y()) << ','
        << fmt_double(s.w_tilde.z()) << '\n';
  }
  if (!out) throw DataError(path + ": write failure");
}

std::vector<ImuSample> read_imu_csv(const std::string& path) {
  const CsvFile csv = read_csv(path, "t,ax,ay,az,gx,gy,gz");
  std::vector<ImuSample> out;
  out.reserve(csv.rows.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& f = csv.rows[i];
    const std::string ctx = path + " row " + std::to_string(i + 2);
    ImuSample s;
    s.t = parse_double(f[0], ctx);
    s.a_tilde = {parse_double(f[1], ctx), parse_double(f[2], ctx), parse_double(f[3], ctx)};
    s.w_tilde = {parse_double(f[4], ctx), parse_double(f[5], ctx), parse_double(f[6], ctx)};
    if (!out.empty() && !(s.t > out.back().t))
      throw DataError(ctx + ": IMU timestamps must be strictly increasing");
    out.push_back(s);
  }
  return out;
}

void write_gnss_csv(const std::string& path, const std::vector<GnssFix>& fixes) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "t,lat,lon,alt,accuracy\n";
  for (const GnssFix& g : fixes) {
    out << fmt_double(g.t) << ',' << fmt_double(g.lat) << ',' << fmt_double(g.lon) << ','
        << fmt_double(g.alt) << ',' << fmt_double(g.accuracy_radius) << '\n';
  }
  if (!out) throw DataError(path + ": write failure");
}

std::vector<GnssFix> read_gnss_csv(const std::string& path) {
  const CsvFile csv = read_csv(path, "t,lat,lon,alt,accuracy");
  std::vector<GnssFix> out;
  out.reserve(csv.rows.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& f = csv.rows[i];
    const std::string ctx = path + " row " + std::to_string(i + 2);
    GnssFix g;
    g.t = parse_double(f[0], ctx);
    g.lat = parse_double(f[1], ctx);
    g.lon = parse_double(f[2], ctx);
    g.alt = parse_double(f[3], ctx);
    g.accuracy_radius = parse_double(f[4], ctx);
    try {
      g.validate();
    } catch (const Error& e) {
      throw DataError(ctx + ": " + e.what());
    }
    if (!out.empty() && !(g.t > out.back().t))
      throw DataError(ctx + ": GNSS timestamps must be strictly increasing");
    out.push_back(g);
  }
  return out;
}

// --- flow binary -------------------------------------------------------------

namespace {
constexpr char kFlowMagic[4] = {'O', 'F', 'L', '1'};
constexpr char kStackMagic[4] = {'O', 'F', 'S', '1'};
}  // namespace

void write_flow_file(const std::string& path, const std::vector<FlowField>& fields) {
  BinWriter out(path);
  for (const FlowField& f : fields) {
    f.validate();
    out.write_raw(kFlowMagic, 4);
    out.write<std::uint32_t>(static_cast<std::uint32_t>(f.width));
    out.write<std::uint32_t>(static_cast<std::uint32_t>(f.height));
    out.write<double>(f.t1);
    out.write<double>(f.t2);
    const std::size_t plane = static_cast<std::size_t>(f.width) * f.height;
    const bool dense =
        f.provenance == FlowProvenance::dense_network && f.points.size() == plane;
    out.write<std::uint8_t>(dense ? 0 : 1);
    if (dense) {
      // Planes assume row-major grid order.
      std::vector<float> buf(plane);
      const auto write_plane = [&](auto getter) {
        for (std::size_t i = 0; i < plane; ++i) buf[i] = static_cast<float>(getter(f.points[i]));
        out.write_raw(buf.data(), plane * sizeof(float));
      };
      write_plane([](const FlowPoint& p) { return p.du; });
      write_plane([](const FlowPoint& p) { return p.dv; });
      write_plane([](const FlowPoint& p) { return p.var_du; });
      write_plane([](const FlowPoint& p) { return p.var_dv; });
    } else {
      out.write<std::uint32_t>(static_cast<std::uint32_t>(f.points.size()));
      for (const FlowPoint& p : f.points) {
        const float rec[6] = {static_cast<float>(p.u1),     static_cast<float>(p.v1),
                              static_cast<float>(p.du),     static_cast<float>(p.dv),
                              static_cast<float>(p.var_du), static_cast<float>(p.var_dv)};
        out.write_raw(rec, sizeof(rec));
      }
    }
  }
}

std::vector<FlowField> read_flow_file(const std::string& path) {
  BinReader in(path);
  std::vector<FlowField> out;
  while (!in.eof()) {
    char magic[4];
    in.read_raw(magic, 4, "record magic");
    if (std::memcmp(magic, kFlowMagic, 4) != 0)
      throw ParseError(path + ": bad magic in flow record " + std::to_string(out.size()));
    FlowField f;
    f.width = static_cast<int>(in.read<std::uint32_t>("width"));
    f.height = static_cast<int>(in.read<std::uint32_t>("height"));
    f.t1 = in.read<double>("t1");
    f.t2 = in.read<double>("t2");
    const std::uint8_t mode = in.read<std::uint8_t>("mode");
    if (f.width <= 0 || f.height <= 0 || mode > 1)
      throw ParseError(path + ": invalid flow record header");
    const std::size_t plane = static_cast<std::size_t>(f.width) * f.height;
    if (mode == 0) {
      f.provenance = FlowProvenance::dense_network;
      std::vector<float> du(plane), dv(plane), vu(plane), vv(plane);
      in.read_raw(du.data(), plane * sizeof(float), "du plane");
      in.read_raw(dv.data(), plane * sizeof(float), "dv plane");
      in.read_raw(vu.data(), plane * sizeof(float), "var_du plane");
      in.read_raw(vv.data(), plane * sizeof(float), "var_dv plane");
      f.points.resize(plane);
      for (int row = 0; row < f.height; ++row) {
        for (int col = 0; col < f.width; ++col) {
          const std::size_t i = static_cast<std::size_t>(row) * f.width + col;
          f.points[i] = FlowPoint{static_cast<double>(col), static_cast<double>(row),
                                  du[i], dv[i], vu[i], vv[i]};
        }
      }
    } else {
      f.provenance = FlowProvenance::sparse_subsample;
      const std::uint32_t count = in.read<std::uint32_t>("point count");
      f.points.resize(count);
      for (std::uint32_t i = 0; i < count; ++i) {
        float rec[6];
        in.read_raw(rec, sizeof(rec), "flow point");
        f.points[i] = FlowPoint{rec[0], rec[1], rec[2], rec[3], rec[4], rec[5]};
      }
    }
    try {
      f.validate();
    } catch (const Error& e) {
      throw ParseError(path + ": record " + std::to_string(out.size()) + ": " + e.what());
    }
    out.push_back(std::move(f));
  }
  return out;
}

void write_stack_file(const std::string& path, const FlowSampleStack& stack) {
  stack.validate();
  BinWriter out(path);
  out.write_raw(kStackMagic, 4);
  out.write<std::uint32_t>(static_cast<std::uint32_t>(stack.width));
  out.write<std::uint32_t>(static_cast<std::uint32_t>(stack.height));
  out.write<double>(stack.t1);
  out.write<double>(stack.t2);
  out.write<std::uint32_t>(static_cast<std::uint32_t>(stack.n_mc()));
  const std::size_t plane = static_cast<std::size_t>(stack.width) * stack.height;
  for (int k = 0; k < stack.n_mc(); ++k) {
    out.write_raw(stack.du_samples[k].data(), plane * sizeof(float));
    out.write_raw(stack.dv_samples[k].data(), plane * sizeof(float));
  }
}

FlowSampleStack read_stack_file(const std::string& path) {
  BinReader in(path);
  char magic[4];
  in.read_raw(magic, 4, "stack magic");
  if (std::memcmp(magic, kStackMagic, 4) != 0) throw ParseError(path + ": bad stack magic");
  FlowSampleStack stack;
  stack.width = static_cast<int>(in.read<std::uint32_t>("width"));
  stack.height = static_cast<int>(in.read<std::uint32_t>("height"));
  stack.t1 = in.read<double>("t1");
  stack.t2 = in.read<double>("t2");
  const std::uint32_t n = in.read<std::uint32_t>("n_mc");
  if (stack.width <= 0 || stack.height <= 0 || n < 2)
    throw ParseError(path + ": invalid stack header");
  const std::size_t plane = static_cast<std::size_t>(stack.width) * stack.height;
  stack.du_samples.resize(n, std::vector<float>(plane));
  stack.dv_samples.resize(n, std::vector<float>(plane));
  for (std::uint32_t k = 0; k < n; ++k) {
    in.read_raw(stack.du_samples[k].data(), plane * sizeof(float), "du plane");
    in.read_raw(stack.dv_samples[k].data(), plane * sizeof(float), "dv plane");
  }
  if (in.remaining() > 0)
    throw ParseError(path + ": " + std::to_string(in.remaining()) +
                     " trailing bytes after stack payload");
  stack.validate();
  return stack;
}

// --- trajectory CSV -----------------------------------------------------------

void write_trajectory_csv(const std::string& path, const TrajectoryEstimate& traj) {
  traj.validate();
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "t,px,py,pz,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const StateVector& m = traj.mean[i];
    out << fmt_double(traj.t[i]);
    for (int k = 0; k < 3; ++k) out << ',' << fmt_double(m[idx::p + k]);
    for (int k = 0; k < 4; ++k) out << ',' << fmt_double(m[idx::q + k]);
    out << '\n';
  }
  if (!out) throw DataError(path + ": write failure");
}

TrajectoryEstimate read_trajectory_csv(const std::string& path) {
  const CsvFile csv = read_csv(path, "t,px,py,pz,qw,qx,qy,qz");
  TrajectoryEstimate traj;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& f = csv.rows[i];
    const std::string ctx = path + " row " + std::to_string(i + 2);
    StateVector m = StateVector::Zero();
    const double t = parse_double(f[0], ctx);
    for (int k = 0; k < 3; ++k) m[idx::p + k] = parse_double(f[1 + k], ctx);
    for (int k = 0; k < 4; ++k) m[idx::q + k] = parse_double(f[4 + k], ctx);
    m[idx::qm] = 1.0;
    m.segment<3>(idx::ta).setOnes();
    if (!traj.t.empty() && !(t > traj.t.back()))
      throw DataError(ctx + ": trajectory timestamps must be strictly increasing");
    traj.t.push_back(t);
    traj.mean.push_back(m);
  }
  return traj;
}

// --- key = value files ---------------------------------------------------------

std::string KeyValues::get_string(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ParseError(source + ": missing key '" + key + "'");
  return it->second;
}

double KeyValues::get_double(const std::string& key) const {
  return parse_double(get_string(key), source + " key '" + key + "'");
}

int KeyValues::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw ParseError(source + ": key '" + key + "' is not an integer");
  return i;
}

Eigen::VectorXd KeyValues::get_vector(const std::string& key, int expected) const {
  std::istringstream ss(get_string(key));
  std::vector<double> vals;
  std::string tok;
  while (ss >> tok) vals.push_back(parse_double(tok, source + " key '" + key + "'"));
  if (static_cast<int>(vals.size()) != expected)
    throw ParseError(source + ": key '" + key + "' expects " + std::to_string(expected) +
                     " numbers, got " + std::to_string(vals.size()));
  Eigen::VectorXd out(expected);
  for (int i = 0; i < expected; ++i) out[i] = vals[i];
  return out;
}

std::string KeyValues::get_string_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double KeyValues::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int KeyValues::get_int_or(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  KeyValues kv;
  kv.source = path;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
    kv.values[key] = value;
  }
  return kv;
}

// --- manifest -------------------------------------------------------------------

DatasetManifest read_manifest(const std::string& path) {
  const KeyValues kv = read_key_values(path);
  DatasetManifest m;
  m.name = kv.get_string_or("name", "session");
  m.imu_path = kv.get_string("imu");
  m.gnss_path = kv.get_string_or("gnss", "");
  m.flow_path = kv.get_string_or("flow", "");
  m.truth_path = kv.get_string_or("truth", "");
  m.camera.fx = kv.get_double("fx");
  m.camera.fy = kv.get_double("fy");
  m.camera.cx = kv.get_double("cx");
  m.camera.cy = kv.get_double("cy");
  m.camera.image_width = kv.get_int("width");
  m.camera.image_height = kv.get_int("height");
  if (kv.has("r_imu_cam")) {
    const Eigen::VectorXd r = kv.get_vector("r_imu_cam", 9);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m.camera.R_imu_cam(i, j) = r[3 * i + j];
  }
  if (kv.has("t_imu_cam")) m.camera.t_imu_cam = kv.get_vector("t_imu_cam", 3);
  try {
    m.camera.validate();
  } catch (const Error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (kv.has("lat0") || kv.has("lon0") || kv.has("alt0")) {
    EnuOrigin origin;
    origin.lat0 = kv.get_double("lat0");
    origin.lon0 = kv.get_double("lon0");
    origin.alt0 = kv.get_double_or("alt0", 0.0);
    m.origin = origin;
  }
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << "# flowins dataset manifest\n";
  out << "name = " << m.name << "\n";
  out << "imu = " << m.imu_path << "\n";
  if (!m.gnss_path.empty()) out << "gnss = " << m.gnss_path << "\n";
  if (!m.flow_path.empty()) out << "flow = " << m.flow_path << "\n";
  if (!m.truth_path.empty()) out << "truth = " << m.truth_path << "\n";
  out << "fx = " << fmt_double(m.camera.fx) << "\n";
  out << "fy = " << fmt_double(m.camera.fy) << "\n";
  out << "cx = " << fmt_double(m.camera.cx) << "\n";
  out << "cy = " << fmt_double(m.camera.cy) << "\n";
  out << "width = " << m.camera.image_width << "\n";
  out << "height = " << m.camera.image_height << "\n";
  out << "r_imu_cam =";
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out << ' ' << fmt_double(m.camera.R_imu_cam(i, j));
  out << "\n";
  out << "t_imu_cam = " << fmt_double(m.camera.t_imu_cam.x()) << ' '
      << fmt_double(m.camera.t_imu_cam.y()) << ' ' << fmt_double(m.camera.t_imu_cam.z())
      << "\n";
  if (m.origin) {
    out << "lat0 = " << fmt_double(m.origin->lat0) << "\n";
    out << "lon0 = " << fmt_double(m.origin->lon0) << "\n";
    out << "alt0 = " << fmt_double(m.origin->alt0) << "\n";
  }
  if (!out) throw DataError(path + ": write failure");
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset data;
  data.manifest = read_manifest(manifest_path);
  const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
  const auto resolve = [&](const std::string& rel) {
    const std::filesystem::path p(rel);
    return (p.is_absolute() ? p : base / p).string();
  };
  data.imu = read_imu_csv(resolve(data.manifest.imu_path));
  if (data.imu.empty()) throw DataError(manifest_path + ": IMU stream is empty");
  if (!data.manifest.gnss_path.empty()) data.gnss = read_gnss_csv(resolve(data.manifest.gnss_path));
  if (!data.manifest.flow_path.empty()) data.flow = read_flow_file(resolve(data.manifest.flow_path));
  if (!data.manifest.truth_path.empty())
    data.truth = read_trajectory_csv(resolve(data.manifest.truth_path));
  align_streams(data);  // overlap validation
  return data;
}

// --- stream alignment ------------------------------------------------------------

std::vector<StreamEvent> align_streams(const Dataset& data) {
  if (data.imu.empty()) throw EmptyOverlap("no IMU samples");

  double start = data.imu.front().t;
  double end = data.imu.back().t;
  if (!data.flow.empty()) {
    start = std::max(start, data.flow.front().t2);
    end = std::min(end, data.flow.back().t2);
  }
  if (!data.gnss.empty()) {
    start = std::max(start, data.gnss.front().t);
    end = std::min(end, data.gnss.back().t);
  }
  if (start > end) throw EmptyOverlap("sensor streams do not overlap in time");

  std::vector<StreamEvent> events;
  events.reserve(data.imu.size() + data.flow.size() + data.gnss.size());
  for (std::size_t i = 0; i < data.imu.size(); ++i)
    events.push_back({data.imu[i].t, EventType::Imu, i});
  for (std::size_t i = 0; i < data.flow.size(); ++i)
    events.push_back({data.flow[i].t2, EventType::Flow, i});
  for (std::size_t i = 0; i < data.gnss.size(); ++i)
    events.push_back({data.gnss[i].t, EventType::Gnss, i});

  std::stable_sort(events.begin(), events.end(), [](const StreamEvent& a, const StreamEvent& b) {
    if (a.t != b.t) return a.t < b.t;
    return static_cast<int>(a.type) < static_cast<int>(b.type);
  });
  return events;
}

}  // namespace flowins
