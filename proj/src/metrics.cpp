#include "bevsync/metrics.hpp"

#include "bevsync/io.hpp"

#include <algorithm>
#include <sstream>

namespace bevsync::eval {

namespace {

struct Candidate {
  double score;
  int frame;  // index into the frame list
  geom::OrientedBox box;
  double cx, cy;
};

ApResult evaluate(std::vector<Candidate> cands,
                  std::vector<std::vector<sim::BoxAnnotation>> gts_per_frame,
                  double iou_thresh) {
  ApResult result;
  int total_gt = 0;
  for (const auto& g : gts_per_frame) total_gt += static_cast<int>(g.size());
  result.n_gt = total_gt;
  result.n_det = static_cast<int>(cands.size());
  if (total_gt == 0) {
    result.no_gt = true;
    return result;
  }

  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.cx != b.cx) return a.cx < b.cx;
    return a.cy < b.cy;
  });

  std::vector<std::vector<bool>> matched(gts_per_frame.size());
  for (std::size_t i = 0; i < gts_per_frame.size(); ++i)
    matched[i].assign(gts_per_frame[i].size(), false);

  std::vector<double> precisions, recalls;
  int tp = 0, fp = 0;
  for (const auto& det : cands) {
    const auto& gts = gts_per_frame[static_cast<std::size_t>(det.frame)];
    auto& flags = matched[static_cast<std::size_t>(det.frame)];
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (flags[g]) continue;
      const double iou = geom::rotatedIou(det.box, gts[g].box);
      if (iou >= best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      flags[static_cast<std::size_t>(best)] = true;
      ++tp;
    } else {
      ++fp;
    }
    PrPoint p;
    p.score = det.score;
    p.precision = static_cast<double>(tp) / (tp + fp);
    p.recall = static_cast<double>(tp) / total_gt;
    result.curve.push_back(p);
    precisions.push_back(p.precision);
    recalls.push_back(p.recall);
  }

  // area under the precision envelope
  const int n = static_cast<int>(precisions.size());
  std::vector<double> envelope(precisions);
  for (int i = n - 2; i >= 0; --i)
    envelope[static_cast<std::size_t>(i)] = std::max(
        envelope[static_cast<std::size_t>(i)], envelope[static_cast<std::size_t>(i) + 1]);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (int i = 0; i < n; ++i) {
    ap += (recalls[static_cast<std::size_t>(i)] - prev_recall) *
          envelope[static_cast<std::size_t>(i)];
    prev_recall = recalls[static_cast<std::size_t>(i)];
  }
  result.ap = ap;
  return result;
}

}  // namespace

ApResult averagePrecision(std::vector<fuse::Detection> dets,
                          const std::vector<sim::BoxAnnotation>& gts,
                          double iou_thresh) {
  std::vector<Candidate> cands;
  cands.reserve(dets.size());
  for (const auto& d : dets)
    cands.push_back({d.score, 0, d.box, d.box.cx, d.box.cy});
  return evaluate(std::move(cands), {gts}, iou_thresh);
}

ApResult averagePrecisionPooled(const std::vector<FrameDetections>& frames,
                                double iou_thresh) {
  std::vector<Candidate> cands;
  std::vector<std::vector<sim::BoxAnnotation>> gts;
  gts.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    for (const auto& d : frames[i].dets)
      cands.push_back({d.score, static_cast<int>(i), d.box, d.box.cx, d.box.cy});
    gts.push_back(frames[i].gts);
  }
  return evaluate(std::move(cands), std::move(gts), iou_thresh);
}

std::string prCurveCsv(const std::vector<PrPoint>& curve) {
  std::ostringstream out;
  out << "score,precision,recall\n";
  for (const auto& p : curve)
    out << io::formatDouble(p.score) << "," << io::formatDouble(p.precision) << ","
        << io::formatDouble(p.recall) << "\n";
  return out.str();
}

}  // namespace bevsync::eval
