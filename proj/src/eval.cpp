#include "flowins/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace flowins {

std::string AblationConfig::label() const {
  std::string s = "ins";
  if (use_gnss) s += "+gnss";
  if (use_sparse_flow) s += "+sparse";
  if (use_dense_flow) s += "+dense";
  if (use_flow_uncertainty) s += "+unc";
  return s;
}

std::vector<AblationConfig> standard_ablation_rows() {
  std::vector<AblationConfig> rows(6);
  rows[1].use_gnss = true;
  rows[2].use_sparse_flow = true;
  rows[3].use_dense_flow = true;
  rows[3].use_flow_uncertainty = true;
  rows[4].use_gnss = true;
  rows[4].use_sparse_flow = true;
  rows[5].use_gnss = true;
  rows[5].use_dense_flow = true;
  rows[5].use_flow_uncertainty = true;
  return rows;
}

void matched_positions(const TrajectoryEstimate& a, const TrajectoryEstimate& b,
                       std::vector<Eigen::Vector3d>& pa, std::vector<Eigen::Vector3d>& pb) {
  a.validate();
  b.validate();
  pa.clear();
  pb.clear();
  if (a.t.empty() || b.t.empty()) return;
  const double t0 = std::max(a.t.front(), b.t.front());
  const double t1 = std::min(a.t.back(), b.t.back());
  if (t0 > t1) return;

  // Count samples in the overlap to pick the sparser timeline.
  const auto count_in = [&](const TrajectoryEstimate& tr) {
    std::size_t n = 0;
    for (double t : tr.t)
      if (t >= t0 && t <= t1) ++n;
    return n;
  };
  const bool a_sparser = count_in(a) <= count_in(b);
  const TrajectoryEstimate& coarse = a_sparser ? a : b;
  const TrajectoryEstimate& fine = a_sparser ? b : a;

  std::size_t j = 0;
  for (std::size_t i = 0; i < coarse.t.size(); ++i) {
    const double t = coarse.t[i];
    if (t < t0 || t > t1) continue;
    while (j + 1 < fine.t.size() && fine.t[j + 1] <= t) ++j;
    Eigen::Vector3d p_fine;
    if (fine.t[j] == t || j + 1 >= fine.t.size()) {
      p_fine = fine.position(j);
    } else {
      const double w = (t - fine.t[j]) / (fine.t[j + 1] - fine.t[j]);
      p_fine = (1.0 - w) * fine.position(j) + w * fine.position(j + 1);
    }
    if (a_sparser) {
      pa.push_back(coarse.position(i));
      pb.push_back(p_fine);
    } else {
      pa.push_back(p_fine);
      pb.push_back(coarse.position(i));
    }
  }
}

ProcrustesResult procrustes_align(const TrajectoryEstimate& est,
                                  const TrajectoryEstimate& truth) {
  std::vector<Eigen::Vector3d> pe, pt;
  matched_positions(est, truth, pe, pt);
  if (pe.size() < 3) throw DegenerateAlignment("procrustes: need at least 3 common points");

  Eigen::Vector3d ce = Eigen::Vector3d::Zero(), ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < pe.size(); ++i) {
    ce += pe[i];
    ct += pt[i];
  }
  ce /= static_cast<double>(pe.size());
  ct /= static_cast<double>(pt.size());

  Eigen::Matrix3d C = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < pe.size(); ++i) C += (pt[i] - ct) * (pe[i] - ce).transpose();

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(C, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) <= 1e-12 * std::max(svd.singularValues()(0), 1e-300))
    throw DegenerateAlignment("procrustes: points are collinear");
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Eigen::Matrix3d R = svd.matrixU() * D * svd.matrixV().transpose();
  const Eigen::Vector3d t = ct - R * ce;

  ProcrustesResult out;
  out.rotation = R;
  out.translation = t;
  out.aligned = est;
  out.aligned.label = est.label;
  UnitQuaternion qR;
  {
    const Eigen::Quaterniond q(R);
    qR = UnitQuaternion{q.w(), q.x(), q.y(), q.z()};
  }
  for (std::size_t i = 0; i < out.aligned.size(); ++i) {
    StateVector& m = out.aligned.mean[i];
    m.segment<3>(idx::p) = R * m.segment<3>(idx::p) + t;
    m.segment<3>(idx::v) = R * m.segment<3>(idx::v);
    m.segment<3>(idx::pm) = R * m.segment<3>(idx::pm) + t;
    const UnitQuaternion q{m[idx::q], m[idx::q + 1], m[idx::q + 2], m[idx::q + 3]};
    const UnitQuaternion qn = normalized(hamilton(qR, q));
    m[idx::q] = qn.w;
    m[idx::q + 1] = qn.x;
    m[idx::q + 2] = qn.y;
    m[idx::q + 3] = qn.z;
  }
  return out;
}

double rmse(const TrajectoryEstimate& est, const TrajectoryEstimate& truth) {
  std::vector<Eigen::Vector3d> pe, pt;
  matched_positions(est, truth, pe, pt);
  if (pe.empty()) throw Error("rmse: no common timestamps");
  double sum = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) sum += (pe[i] - pt[i]).squaredNorm();
  return std::sqrt(sum / static_cast<double>(pe.size()));
}

FlowField sparse_subsample(const FlowField& field, int max_points) {
  FlowField out = field;
  out.provenance = FlowProvenance::sparse_subsample;
  if (static_cast<int>(field.points.size()) <= max_points) return out;

  std::vector<int> order(field.points.size());
  std::iota(order.begin(), order.end(), 0);
  // Strongest parallax proxy: largest flow magnitude; row-major tie break.
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = field.points[a].du * field.points[a].du +
                      field.points[a].dv * field.points[a].dv;
    const double mb = field.points[b].du * field.points[b].du +
                      field.points[b].dv * field.points[b].dv;
    if (ma != mb) return ma > mb;
    if (field.points[a].v1 != field.points[b].v1)
      return field.points[a].v1 < field.points[b].v1;
    return field.points[a].u1 < field.points[b].u1;
  });
  order.resize(max_points);
  std::sort(order.begin(), order.end());
  out.points.clear();
  for (int i : order) out.points.push_back(field.points[i]);
  return out;
}

FlowField flatten_uncertainty(const FlowField& field) {
  FlowField out = field;
  if (field.points.empty()) return out;
  std::vector<double> vu, vv;
  vu.reserve(field.points.size());
  vv.reserve(field.points.size());
  for (const FlowPoint& p : field.points) {
    vu.push_back(p.var_du);
    vv.push_back(p.var_dv);
  }
  const auto median = [](std::vector<double>& v) {
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return v[mid];
  };
  const double mu = median(vu);
  const double mv = median(vv);
  for (FlowPoint& p : out.points) {
    p.var_du = mu;
    p.var_dv = mv;
  }
  return out;
}

AblationResults run_ablation(const Dataset& data, const std::vector<AblationConfig>& configs,
                             const SessionConfig& base) {
  if (!data.truth) throw DataError("run_ablation: dataset has no ground truth");

  AblationResults results;
  results.truth = *data.truth;

  for (const AblationConfig& config : configs) {
    config.validate();

    Dataset row_data = data;
    SessionConfig scfg = base;
    scfg.use_gnss = config.use_gnss;
    scfg.use_flow = config.use_dense_flow || config.use_sparse_flow;
    if (!scfg.use_flow) row_data.flow.clear();
    if (config.use_sparse_flow)
      for (FlowField& f : row_data.flow) f = sparse_subsample(f);
    if (scfg.use_flow && !config.use_flow_uncertainty)
      for (FlowField& f : row_data.flow) f = flatten_uncertainty(f);

    const FusionSession session(scfg);
    const SessionResult run = session.run(row_data);
    const TrajectoryEstimate smoothed = rts_smooth(run.history);

    AblationRow row;
    row.config = config;
    row.points_accepted = run.points_accepted;
    row.points_gated = run.points_gated;
    row.points_degenerate = run.points_degenerate;

    const ProcrustesResult pf = procrustes_align(run.filter_traj, results.truth);
    const ProcrustesResult ps = procrustes_align(smoothed, results.truth);
    row.filter_aligned = pf.aligned;
    row.smoother_aligned = ps.aligned;
    row.filter_rmse = rmse(pf.aligned, results.truth);
    row.smoother_rmse = rmse(ps.aligned, results.truth);
    row.filter_rmse_unaligned = rmse(run.filter_traj, results.truth);
    row.smoother_rmse_unaligned = rmse(smoothed, results.truth);
    results.rows.push_back(std::move(row));

    if (config.use_gnss && results.gnss_enu.empty() && run.origin_set) {
      for (const GnssFix& fix : data.gnss) {
        results.gnss_enu.push_back(wgs_to_enu(fix, run.origin));
        results.gnss_radius.push_back(fix.accuracy_radius);
      }
    }
  }
  return results;
}

std::string AblationResults::to_csv() const {
  std::ostringstream out;
  out << "config,ins,gnss,sparse_flow,dense_flow,uncertainty,"
         "filter_rmse,smoother_rmse,filter_rmse_unaligned,smoother_rmse_unaligned\n";
  char buf[256];
  for (const AblationRow& row : rows) {
    std::snprintf(buf, sizeof(buf), "%s,1,%d,%d,%d,%d,%.6f,%.6f,%.6f,%.6f\n",
                  row.config.label().c_str(), row.config.use_gnss ? 1 : 0,
                  row.config.use_sparse_flow ? 1 : 0, row.config.use_dense_flow ? 1 : 0,
                  row.config.use_flow_uncertainty ? 1 : 0, row.filter_rmse, row.smoother_rmse,
                  row.filter_rmse_unaligned, row.smoother_rmse_unaligned);
    out << buf;
  }
  return out.str();
}

namespace {

struct SvgFrame {
  double min_x, max_x, min_y, max_y;
  double width = 720.0, height = 720.0, margin = 40.0;

  double sx(double x) const {
    return margin + (x - min_x) / std::max(max_x - min_x, 1e-9) * (width - 2 * margin);
  }
  double sy(double y) const {
    // SVG y grows downward; east-north tracks keep north up.
    return height - margin - (y - min_y) / std::max(max_y - min_y, 1e-9) * (height - 2 * margin);
  }
  double scale() const {
    return (width - 2 * margin) / std::max({max_x - min_x, max_y - min_y, 1e-9});
  }
};

void svg_polyline(std::ostream& out, const SvgFrame& f, const TrajectoryEstimate& traj,
                  const char* color, double stroke) {
  out << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << stroke
      << "\" points=\"";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const Eigen::Vector3d p = traj.position(i);
    out << f.sx(p.x()) << ',' << f.sy(p.y()) << ' ';
  }
  out << "\"/>\n";
}

}  // namespace

std::vector<std::string> emit_plots(const AblationResults& results, const std::string& out_dir) {
  if (results.rows.empty()) throw Error("emit_plots: no ablation results");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  for (const AblationRow& row : results.rows) {
    SvgFrame frame{1e300, -1e300, 1e300, -1e300};
    const auto grow = [&](const Eigen::Vector3d& p) {
      frame.min_x = std::min(frame.min_x, p.x());
      frame.max_x = std::max(frame.max_x, p.x());
      frame.min_y = std::min(frame.min_y, p.y());
      frame.max_y = std::max(frame.max_y, p.y());
    };
    for (std::size_t i = 0; i < results.truth.size(); ++i) grow(results.truth.position(i));
    for (std::size_t i = 0; i < row.filter_aligned.size(); ++i)
      grow(row.filter_aligned.position(i));

    const fs::path path = fs::path(out_dir) / (row.config.label() + ".svg");
    std::ofstream out(path);
    if (!out) throw DataError(path.string() + ": cannot open for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << frame.width
        << "\" height=\"" << frame.height << "\">\n";
    out << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (row.config.use_gnss) {
      for (std::size_t i = 0; i < results.gnss_enu.size(); ++i) {
        out << "  <circle cx=\"" << frame.sx(results.gnss_enu[i].x()) << "\" cy=\""
            << frame.sy(results.gnss_enu[i].y()) << "\" r=\""
            << results.gnss_radius[i] * frame.scale()
            << "\" fill=\"#4575b4\" fill-opacity=\"0.15\" stroke=\"#4575b4\" "
               "stroke-opacity=\"0.4\"/>\n";
      }
    }
    svg_polyline(out, frame, results.truth, "#d73027", 2.0);
    svg_polyline(out, frame, row.filter_aligned, "#1a9850", 1.5);
    svg_polyline(out, frame, row.smoother_aligned, "#313695", 1.5);
    out << "  <text x=\"" << frame.margin << "\" y=\"20\" font-family=\"sans-serif\" "
        << "font-size=\"14\">" << row.config.label()
        << "  (filter rmse " << row.filter_rmse << " m, smoother " << row.smoother_rmse
        << " m)</text>\n";
    out << "</svg>\n";
    written.push_back(path.string());
  }

  const fs::path table = fs::path(out_dir) / "results.csv";
  std::ofstream out(table);
  if (!out) throw DataError(table.string() + ": cannot open for writing");
  out << results.to_csv();
  written.push_back(table.string());
  return written;
}

}  // namespace flowins
