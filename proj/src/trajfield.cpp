#include "bevsync/trajfield.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace bevsync::field {

std::vector<Trajectory> buildTrajectories(
    const std::vector<FrameAnnotations>& frames, std::int64_t tau_us,
    std::int64_t period_us, int m, std::int64_t t_us) {
  const int length = trajectoryLength(tau_us, period_us, m);

  // annotations keyed by (object, timestamp); duplicates are an error
  std::map<int, std::map<std::int64_t, const sim::BoxAnnotation*>> per_object;
  for (const auto& frame : frames) {
    for (const auto& box : frame.boxes) {
      auto& series = per_object[box.object_id];
      if (!series.emplace(frame.timestamp_us, &box).second)
        throw std::invalid_argument(
            "buildTrajectories: duplicate annotation for object " +
            std::to_string(box.object_id) + " at " +
            std::to_string(frame.timestamp_us));
    }
  }

  std::vector<Trajectory> out;
  for (const auto& [object_id, series] : per_object) {
    if (!series.count(t_us)) continue;  // not present at ego time
    Trajectory traj;
    traj.object_id = object_id;
    for (int k = length - 1; k >= 0; --k) {
      const std::int64_t ts = t_us - static_cast<std::int64_t>(k) * period_us;
      const auto it = series.find(ts);
      if (it == series.end()) continue;  // appeared mid-window
      TrajectorySample s;
      s.timestamp_us = ts;
      s.cx = it->second->box.cx;
      s.cy = it->second->box.cy;
      s.yaw = it->second->box.yaw;
      s.age_frames = k;
      traj.samples.push_back(s);
    }
    if (!traj.samples.empty()) out.push_back(std::move(traj));
  }
  return out;
}

namespace {

struct SplatPoint {
  double cx = 0.0;
  double cy = 0.0;
  double tangent = 0.0;
  int age = 0;
};

// Interpolate the polyline at a sub-cell step. Each interpolated point takes
// the age of the nearest sample along its segment.
std::vector<SplatPoint> densify(const Trajectory& traj, double step_m) {
  std::vector<SplatPoint> pts;
  const auto& s = traj.samples;
  if (s.size() == 1) {
    pts.push_back({s[0].cx, s[0].cy, s[0].yaw, s[0].age_frames});
    return pts;
  }
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const auto& a = s[i];      // older
    const auto& b = s[i + 1];  // newer
    const double dx = b.cx - a.cx, dy = b.cy - a.cy;
    const double len = std::hypot(dx, dy);
    const double tangent = len > 1e-9 ? std::atan2(dy, dx) : a.yaw;
    const int steps = std::max(1, static_cast<int>(std::ceil(len / step_m)));
    for (int k = 0; k < steps; ++k) {
      const double u = static_cast<double>(k) / steps;
      pts.push_back({a.cx + u * dx, a.cy + u * dy, tangent,
                     u <= 0.5 ? a.age_frames : b.age_frames});
    }
    if (i + 2 == s.size())
      pts.push_back({b.cx, b.cy, tangent, b.age_frames});
  }
  return pts;
}

struct CellState {
  double pos = 0.0;
  double best_d2 = std::numeric_limits<double>::infinity();
  double tangent = 0.0;
  int age = kEmpty;
};

}  // namespace

RasterizeResult rasterizeField(const std::vector<Trajectory>& trajs,
                               const geom::GridSpec& grid,
                               const RasterizeOptions& opts) {
  RasterizeResult result;
  result.field = TrajectoryField::empty(grid);
  result.field.has_time_index = true;
  TrajectoryField& f = result.field;

  const double radius_cells = opts.sigma_cells * opts.truncate_sigmas;
  const double step_m = opts.step_fraction * grid.cell_size;

  // winner age per cell across trajectories; smaller age = more recent
  IntPlane win_age = IntPlane::Constant(grid.height_cells, grid.width_cells, -1);

  for (const auto& traj : trajs) {
    const auto points = densify(traj, step_m);

    // per-trajectory raster: max response and nearest interpolated point
    std::map<std::pair<int, int>, CellState> cells;
    for (const auto& p : points) {
      const Eigen::Vector2d rc = grid.worldToCell(p.cx, p.cy);
      const int r0 = static_cast<int>(std::floor(rc.x() - radius_cells));
      const int r1 = static_cast<int>(std::ceil(rc.x() + radius_cells));
      const int c0 = static_cast<int>(std::floor(rc.y() - radius_cells));
      const int c1 = static_cast<int>(std::ceil(rc.y() + radius_cells));
      for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
          if (!grid.inBounds(r, c)) continue;
          const double dr = r - rc.x(), dc = c - rc.y();
          const double d2 = dr * dr + dc * dc;
          if (d2 > radius_cells * radius_cells) continue;
          auto& cell = cells[{r, c}];
          cell.pos = std::max(
              cell.pos, std::exp(-d2 / (2.0 * opts.sigma_cells * opts.sigma_cells)));
          // nearest interpolated point decides age/tangent; distance ties go
          // to the more recent sample
          if (d2 < cell.best_d2 ||
              (d2 == cell.best_d2 && cell.age != kEmpty && p.age < cell.age)) {
            cell.best_d2 = d2;
            cell.tangent = p.tangent;
            cell.age = p.age;
          }
        }
      }
    }

    if (cells.empty()) {
      ++result.skipped;
      continue;
    }

    for (const auto& [key, cell] : cells) {
      const int r = key.first, c = key.second;
      const bool vacant = f.time_index(r, c) == kEmpty;
      const bool newer = !vacant && cell.age < win_age(r, c);
      const bool tie_break = !vacant && cell.age == win_age(r, c) &&
                             traj.object_id < f.object_id(r, c);
      if (!(vacant || newer || tie_break)) continue;
      win_age(r, c) = cell.age;
      f.position(r, c) = opts.binary_position ? 1.0 : cell.pos;
      f.orient_cos(r, c) = std::cos(cell.tangent);
      f.orient_sin(r, c) = std::sin(cell.tangent);
      f.time_index(r, c) = cell.age;
      f.object_id(r, c) = traj.object_id;
    }
  }
  return result;
}

UNetParams UNetParams::seeded(int cin, int width, Rng& rng) {
  UNetParams p;
  p.stem = nn::Conv2dParams::seeded(cin, width, 3, 1, 1, rng);
  p.down1 = nn::Conv2dParams::seeded(width, 2 * width, 3, 2, 1, rng);
  p.down2 = nn::Conv2dParams::seeded(2 * width, 4 * width, 3, 2, 1, rng);
  p.down3 = nn::Conv2dParams::seeded(4 * width, 8 * width, 3, 2, 1, rng);
  p.up3 = nn::Conv2dParams::seeded(8 * width + 4 * width, 4 * width, 3, 1, 1, rng);
  p.up2 = nn::Conv2dParams::seeded(4 * width + 2 * width, 2 * width, 3, 1, 1, rng);
  p.up1 = nn::Conv2dParams::seeded(2 * width + width, width, 3, 1, 1, rng);
  p.head = nn::Conv2dParams::seeded(width, 3, 1, 1, 0, rng);
  return p;
}

UNetParams UNetParams::zeros(int cin, int width) {
  UNetParams p;
  p.stem = nn::Conv2dParams::zeros(cin, width, 3, 1, 1);
  p.down1 = nn::Conv2dParams::zeros(width, 2 * width, 3, 2, 1);
  p.down2 = nn::Conv2dParams::zeros(2 * width, 4 * width, 3, 2, 1);
  p.down3 = nn::Conv2dParams::zeros(4 * width, 8 * width, 3, 2, 1);
  p.up3 = nn::Conv2dParams::zeros(8 * width + 4 * width, 4 * width, 3, 1, 1);
  p.up2 = nn::Conv2dParams::zeros(4 * width + 2 * width, 2 * width, 3, 1, 1);
  p.up1 = nn::Conv2dParams::zeros(2 * width + width, width, 3, 1, 1);
  p.head = nn::Conv2dParams::zeros(width, 3, 1, 1, 0);
  return p;
}

namespace {

Tensor3d upsample2x(const Tensor3d& in) {
  Tensor3d out(in.channels(), in.height() * 2, in.width() * 2);
  for (int ch = 0; ch < in.channels(); ++ch)
    for (int r = 0; r < out.height(); ++r)
      for (int c = 0; c < out.width(); ++c)
        out[ch](r, c) = in[ch](r / 2, c / 2);
  return out;
}

Tensor3d concatChannels(const Tensor3d& a, const Tensor3d& b) {
  Tensor3d out(a.channels() + b.channels(), a.height(), a.width());
  for (int ch = 0; ch < a.channels(); ++ch) out[ch] = a[ch];
  for (int ch = 0; ch < b.channels(); ++ch) out[a.channels() + ch] = b[ch];
  return out;
}

}  // namespace

TrajectoryField predictField(const Tensor3d& history, const geom::GridSpec& grid,
                             const UNetParams& params) {
  require(history.height() == grid.height_cells &&
              history.width() == grid.width_cells,
          "predictField: grid mismatch");
  require(history.height() % 8 == 0 && history.width() % 8 == 0,
          "predictField: height/width must be divisible by 8");

  Tensor3d x0 = nn::conv2d(history, params.stem);
  nn::reluInPlace(x0);
  Tensor3d x1 = nn::conv2d(x0, params.down1);
  nn::reluInPlace(x1);
  Tensor3d x2 = nn::conv2d(x1, params.down2);
  nn::reluInPlace(x2);
  Tensor3d x3 = nn::conv2d(x2, params.down3);
  nn::reluInPlace(x3);

  Tensor3d y2 = nn::conv2d(concatChannels(upsample2x(x3), x2), params.up3);
  nn::reluInPlace(y2);
  Tensor3d y1 = nn::conv2d(concatChannels(upsample2x(y2), x1), params.up2);
  nn::reluInPlace(y1);
  Tensor3d y0 = nn::conv2d(concatChannels(upsample2x(y1), x0), params.up1);
  nn::reluInPlace(y0);
  Tensor3d head = nn::conv2d(y0, params.head);

  TrajectoryField out = TrajectoryField::empty(grid);
  out.has_time_index = false;
  for (int r = 0; r < grid.height_cells; ++r) {
    for (int c = 0; c < grid.width_cells; ++c) {
      const double pos = nn::sigmoid(head[0](r, c));
      double oc = head[1](r, c), os = head[2](r, c);
      if (pos > params.orient_norm_threshold) {
        const double norm = std::hypot(oc, os);
        if (norm > 1e-12) {
          oc /= norm;
          os /= norm;
        }
      }
      out.position(r, c) = pos;
      out.orient_cos(r, c) = oc;
      out.orient_sin(r, c) = os;
    }
  }
  return out;
}

namespace {

constexpr double kProbEps = 1e-12;

inline double clampProb(double p) {
  return std::min(1.0 - kProbEps, std::max(kProbEps, p));
}

}  // namespace

FieldLossGrad fieldLossWithGrad(const TrajectoryField& pred,
                                const TrajectoryField& gt,
                                const FieldLossOptions& opts) {
  require(pred.position.rows() == gt.position.rows() &&
              pred.position.cols() == gt.position.cols(),
          "fieldLoss: shape mismatch");
  require(gt.has_time_index, "fieldLoss: ground truth lacks supervision planes");

  FieldLossGrad out;
  out.d_position = PlaneD::Zero(gt.position.rows(), gt.position.cols());
  out.d_orient_cos = PlaneD::Zero(gt.position.rows(), gt.position.cols());
  out.d_orient_sin = PlaneD::Zero(gt.position.rows(), gt.position.cols());

  int peaks = 0;
  for (int r = 0; r < gt.position.rows(); ++r)
    for (int c = 0; c < gt.position.cols(); ++c)
      if (gt.position(r, c) == 1.0) ++peaks;

  double pos_sum = 0.0;
  if (peaks == 0) {
    out.loss.no_peaks = true;
  } else {
    for (int r = 0; r < gt.position.rows(); ++r) {
      for (int c = 0; c < gt.position.cols(); ++c) {
        const double y = gt.position(r, c);
        const double p = clampProb(pred.position(r, c));
        if (y == 1.0) {
          const double om = 1.0 - p;
          pos_sum += std::pow(om, opts.focal_alpha) * std::log(p);
          out.d_position(r, c) =
              -(-opts.focal_alpha * std::pow(om, opts.focal_alpha - 1.0) *
                    std::log(p) +
                std::pow(om, opts.focal_alpha) / p) /
              peaks;
        } else {
          const double w = std::pow(1.0 - y, opts.focal_beta);
          pos_sum += w * std::pow(p, opts.focal_alpha) * std::log(1.0 - p);
          out.d_position(r, c) =
              -w *
              (opts.focal_alpha * std::pow(p, opts.focal_alpha - 1.0) *
                   std::log(1.0 - p) -
               std::pow(p, opts.focal_alpha) / (1.0 - p)) /
              peaks;
        }
      }
    }
    out.loss.position = -pos_sum / peaks;
  }

  int supervised = 0;
  for (int r = 0; r < gt.position.rows(); ++r)
    for (int c = 0; c < gt.position.cols(); ++c)
      if (gt.time_index(r, c) != kEmpty) ++supervised;

  if (supervised > 0) {
    double orient_sum = 0.0;
    for (int r = 0; r < gt.position.rows(); ++r) {
      for (int c = 0; c < gt.position.cols(); ++c) {
        if (gt.time_index(r, c) == kEmpty) continue;
        const double dc = pred.orient_cos(r, c) - gt.orient_cos(r, c);
        const double ds = pred.orient_sin(r, c) - gt.orient_sin(r, c);
        orient_sum += std::abs(dc) + std::abs(ds);
        out.d_orient_cos(r, c) = (dc > 0 ? 1.0 : (dc < 0 ? -1.0 : 0.0)) / supervised;
        out.d_orient_sin(r, c) = (ds > 0 ? 1.0 : (ds < 0 ? -1.0 : 0.0)) / supervised;
      }
    }
    out.loss.orientation = orient_sum / supervised;
  }

  out.loss.total = out.loss.position + out.loss.orientation;
  return out;
}

FieldLoss fieldLoss(const TrajectoryField& pred, const TrajectoryField& gt,
                    const FieldLossOptions& opts) {
  return fieldLossWithGrad(pred, gt, opts).loss;
}

}  // namespace bevsync::field
