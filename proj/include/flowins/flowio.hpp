#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowins/flow_types.hpp"
#include "flowins/geometry.hpp"
#include "flowins/gnss.hpp"
#include "flowins/ins.hpp"
#include "flowins/trajectory.hpp"

namespace flowins {

// ---------------------------------------------------------------------------
// MC-dropout variance reduction.
// ---------------------------------------------------------------------------

/// Stack of flow samples for one frame pair (one per stochastic forward
/// pass). Planes are row-major width*height.
struct FlowSampleStack {
  int width{0}, height{0};
  double t1{0.0}, t2{0.0};
  std::vector<std::vector<float>> du_samples;
  std::vector<std::vector<float>> dv_samples;

  int n_mc() const { return static_cast<int>(du_samples.size()); }
  void validate() const;
};

/// Per-pixel mean flow and per-component sample variance (n-1 denominator)
/// over the stack, floored at var_floor so the measurement covariance stays
/// invertible when samples coincide.
FlowField flow_variance_from_stack(const FlowSampleStack& stack, double var_floor = 0.01);

// ---------------------------------------------------------------------------
// File formats. All binary formats are little-endian and byte-exact.
// ---------------------------------------------------------------------------

void write_imu_csv(const std::string& path, const std::vector<ImuSample>& samples);
std::vector<ImuSample> read_imu_csv(const std::string& path);

void write_gnss_csv(const std::string& path, const std::vector<GnssFix>& fixes);
std::vector<GnssFix> read_gnss_csv(const std::string& path);

/// Flow stream: concatenated records, each
///   "OFL1" | u32 width | u32 height | f64 t1 | f64 t2 | u8 mode |
///   mode 0 (dense):  4 planes f32 row-major (du, dv, var_du, var_dv)
///   mode 1 (sparse): u32 count | count x 6 f32 (u1, v1, du, dv, var_du, var_dv)
void write_flow_file(const std::string& path, const std::vector<FlowField>& fields);
std::vector<FlowField> read_flow_file(const std::string& path);

/// Sample-stack container:
///   "OFS1" | u32 width | u32 height | f64 t1 | f64 t2 | u32 n_mc |
///   n_mc x (du plane f32, dv plane f32)
void write_stack_file(const std::string& path, const FlowSampleStack& stack);
FlowSampleStack read_stack_file(const std::string& path);

/// Pose track CSV: t,px,py,pz,qw,qx,qy,qz (other state entries zero on read).
void write_trajectory_csv(const std::string& path, const TrajectoryEstimate& traj);
TrajectoryEstimate read_trajectory_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Flat key = value files (manifest and tool configuration).
// ---------------------------------------------------------------------------

struct KeyValues {
  std::map<std::string, std::string> values;
  std::string source;

  bool has(const std::string& key) const { return values.count(key) > 0; }
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  Eigen::VectorXd get_vector(const std::string& key, int expected) const;

  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  double get_double_or(const std::string& key, double fallback) const;
  int get_int_or(const std::string& key, int fallback) const;
};

KeyValues read_key_values(const std::string& path);

/// Paths and calibration for one recorded/synthesized session.
struct DatasetManifest {
  std::string name;
  std::string imu_path, gnss_path, flow_path;
  std::string truth_path;  ///< optional
  CameraModel camera;
  std::optional<EnuOrigin> origin;
};

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

/// Fully loaded session with basic consistency checks applied.
struct Dataset {
  DatasetManifest manifest;
  std::vector<ImuSample> imu;
  std::vector<GnssFix> gnss;
  std::vector<FlowField> flow;
  std::optional<TrajectoryEstimate> truth;
};

Dataset load_dataset(const std::string& manifest_path);

// ---------------------------------------------------------------------------
// Stream alignment.
// ---------------------------------------------------------------------------

enum class EventType : int { Imu = 0, Flow = 1, Gnss = 2 };

struct StreamEvent {
  double t{0.0};
  EventType type{EventType::Imu};
  std::size_t index{0};  ///< into the source stream
};

/// Chronologically merged event timeline over the dataset streams. Flow
/// events are stamped at the frame-pair end time t2. Ties resolve
/// imu < flow < gnss. Throws EmptyOverlap when the streams do not overlap
/// in time.
std::vector<StreamEvent> align_streams(const Dataset& data);

}  // namespace flowins
