#include "leapvo/tracker.hpp"

#include <algorithm>
#include <string>

#include "leapvo/errors.hpp"

namespace leapvo {

namespace {

struct Window {
  int start;
  int length;
};

std::vector<Window> split_windows(int first_frame, int num_frames, int window) {
  std::vector<Window> out;
  const int stride = window - 1;
  int start = first_frame;
  const int end = first_frame + num_frames;
  while (true) {
    const int len = std::min(window, end - start);
    out.push_back({start, len});
    if (start + len >= end) break;
    start += stride;
  }
  return out;
}

struct Stitched {
  Track track;
  std::vector<bool> filled;
  int origin_window = 0;
};

// Copies the frames of `src` (a track over window `w`) that `dst` has not
// received yet, including the matching diagonal blocks of the scale matrices.
void merge(Stitched& dst, const Track& src, const Window& w, int first_frame) {
  std::vector<int> rows;
  for (int s = 0; s < w.length; ++s) {
    const int abs_row = w.start + s - first_frame;
    if (!dst.filled[static_cast<size_t>(abs_row)]) rows.push_back(s);
  }
  Track& t = dst.track;
  if (t.features.cols() == 0 && src.features.cols() > 0)
    t.features = Eigen::MatrixXd::Zero(t.xy.rows(), src.features.cols());
  for (int s : rows) {
    const int r = w.start + s - first_frame;
    t.xy.row(r) = src.xy.row(s);
    t.visibility[r] = src.visibility[s];
    if (src.features.cols() == t.features.cols() && src.features.cols() > 0)
      t.features.row(r) = src.features.row(s);
    for (int s2 : rows) {
      const int r2 = w.start + s2 - first_frame;
      t.distribution.sigma_a(r, r2) = src.distribution.sigma_a(s, s2);
      t.distribution.sigma_b(r, r2) = src.distribution.sigma_b(s, s2);
    }
    dst.filled[static_cast<size_t>(r)] = true;
  }
  if (t.dynamic_label < 0) t.dynamic_label = src.dynamic_label;
}

}  // namespace

TrackSet chain_windows(PointTracker& tracker, int first_frame, int num_frames,
                       const QuerySet& queries, int window) {
  if (window < 2) throw Error(ErrorCode::kInvalidArgument, "model window must be >= 2");
  if (num_frames <= window) return tracker.track(first_frame, num_frames, queries);

  for (const auto& q : queries) {
    if (q.frame < first_frame || q.frame >= first_frame + num_frames)
      throw Error(ErrorCode::kWindowMismatch, "query frame " + std::to_string(q.frame) + " outside window");
  }
  const auto windows = split_windows(first_frame, num_frames, window);
  const int nw = static_cast<int>(windows.size());

  std::vector<Stitched> out(queries.size());
  for (size_t i = 0; i < queries.size(); ++i) {
    auto& st = out[i];
    st.track.query = queries[i];
    st.track.xy = Eigen::MatrixX2d::Zero(num_frames, 2);
    st.track.visibility = Eigen::VectorXd::Zero(num_frames);
    st.track.distribution.sigma_a = Eigen::MatrixXd::Zero(num_frames, num_frames);
    st.track.distribution.sigma_b = Eigen::MatrixXd::Zero(num_frames, num_frames);
    st.filled.assign(static_cast<size_t>(num_frames), false);
    // earliest window containing the query frame
    int m = 0;
    while (queries[i].frame >= windows[static_cast<size_t>(m)].start + windows[static_cast<size_t>(m)].length) ++m;
    st.origin_window = m;
  }

  auto requery = [&](size_t i, int frame) {
    Query q = queries[i];
    q.frame = frame;
    q.pixel = out[i].track.xy.row(frame - first_frame).transpose();
    return q;
  };

  // forward sweep: originals in their window, earlier tracks carried on
  for (int m = 0; m < nw; ++m) {
    const Window& w = windows[static_cast<size_t>(m)];
    QuerySet batch;
    std::vector<size_t> owners;
    for (size_t i = 0; i < queries.size(); ++i) {
      if (out[i].origin_window == m) {
        batch.push_back(queries[i]);
        owners.push_back(i);
      } else if (out[i].origin_window < m) {
        batch.push_back(requery(i, w.start));
        owners.push_back(i);
      }
    }
    if (batch.empty()) continue;
    const TrackSet ts = tracker.track(w.start, w.length, batch);
    for (size_t b = 0; b < owners.size(); ++b) merge(out[owners[b]], ts.tracks[b], w, first_frame);
  }

  // backward sweep: extend later-hosted tracks into earlier windows
  for (int m = nw - 2; m >= 0; --m) {
    const Window& w = windows[static_cast<size_t>(m)];
    const int overlap = w.start + w.length - 1;
    QuerySet batch;
    std::vector<size_t> owners;
    for (size_t i = 0; i < queries.size(); ++i) {
      if (out[i].origin_window > m) {
        batch.push_back(requery(i, overlap));
        owners.push_back(i);
      }
    }
    if (batch.empty()) continue;
    const TrackSet ts = tracker.track(w.start, w.length, batch);
    for (size_t b = 0; b < owners.size(); ++b) merge(out[owners[b]], ts.tracks[b], w, first_frame);
  }

  TrackSet result;
  result.first_frame = first_frame;
  result.num_frames = num_frames;
  result.tracks.reserve(out.size());
  for (auto& st : out) {
    Track& t = st.track;
    t.distribution.mu_a = t.xy.col(0);
    t.distribution.mu_b = t.xy.col(1);
    result.tracks.push_back(std::move(t));
  }
  return result;
}

}  // namespace leapvo
