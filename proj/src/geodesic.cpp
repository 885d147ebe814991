#include "geotrack/geodesic.hpp"

#include "geotrack/error.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <queue>

namespace geotrack {

namespace {

using QueueEntry = std::pair<double, VertexId>;
using MinQueue = std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>>;

void run_dijkstra(const SurfaceMesh& mesh, std::vector<double>& dist, MinQueue& queue) {
  while (!queue.empty()) {
    const auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (const Neighbor& nb : mesh.neighbors(v)) {
      const double nd = d + nb.length;
      if (nd < dist[nb.vertex]) {
        dist[nb.vertex] = nd;
        queue.emplace(nd, nb.vertex);
      }
    }
  }
}

// Reusable bounded search: is there a vertex u != v within geodesic distance
// < radius whose center distance is >= that of v?
class BallProbe {
 public:
  explicit BallProbe(const SurfaceMesh& mesh)
      : mesh_(mesh), dist_(mesh.num_vertices(), kInfinity) {}

  bool has_higher_neighbor(VertexId v, double radius, const std::vector<double>& center_dist) {
    const double level = center_dist[v];
    bool found = false;
    MinQueue queue;
    dist_[v] = 0.0;
    touched_.push_back(v);
    queue.emplace(0.0, v);
    while (!queue.empty() && !found) {
      const auto [d, u] = queue.top();
      queue.pop();
      if (d > dist_[u]) continue;
      if (u != v && center_dist[u] >= level) {
        found = true;
        break;
      }
      for (const Neighbor& nb : mesh_.neighbors(u)) {
        const double nd = d + nb.length;
        if (nd < radius && nd < dist_[nb.vertex]) {
          if (dist_[nb.vertex] == kInfinity) touched_.push_back(nb.vertex);
          dist_[nb.vertex] = nd;
          queue.emplace(nd, nb.vertex);
        }
      }
    }
    for (VertexId t : touched_) dist_[t] = kInfinity;
    touched_.clear();
    return found;
  }

 private:
  const SurfaceMesh& mesh_;
  std::vector<double> dist_;
  std::vector<VertexId> touched_;
};

}  // namespace

DistanceField shortest_distances(const SurfaceMesh& mesh, VertexId source) {
  if (!mesh.valid_vertex(source))
    throw UsageError("shortest_distances: source " + std::to_string(source) +
                     " is not a vertex of a mesh with " + std::to_string(mesh.num_vertices()) +
                     " vertices");
  DistanceField field;
  field.source = source;
  field.distances = multi_source_distances(mesh, std::span<const VertexId>(&source, 1));
  return field;
}

std::vector<double> multi_source_distances(const SurfaceMesh& mesh,
                                           std::span<const VertexId> sources) {
  std::vector<double> dist(mesh.num_vertices(), kInfinity);
  MinQueue queue;
  for (VertexId s : sources) {
    if (!mesh.valid_vertex(s)) throw UsageError("multi_source_distances: invalid source vertex");
    dist[s] = 0.0;
    queue.emplace(0.0, s);
  }
  run_dijkstra(mesh, dist, queue);
  return dist;
}

namespace {

template <class Members>
VertexId nearest_to_centroid(const SurfaceMesh& mesh, const Members& members) {
  Vec3 centroid = Vec3::Zero();
  std::size_t count = 0;
  for (VertexId v : members) {
    centroid += mesh.vertex(v);
    ++count;
  }
  centroid /= static_cast<double>(count);
  VertexId best = -1;
  double best_d2 = kInfinity;
  for (VertexId v : members) {
    const double d2 = (mesh.vertex(v) - centroid).squaredNorm();
    if (d2 < best_d2 || (d2 == best_d2 && v < best)) {
      best_d2 = d2;
      best = v;
    }
  }
  return best;
}

}  // namespace

VertexId mesh_center(const SurfaceMesh& mesh) {
  if (mesh.empty()) throw UsageError("mesh_center: mesh is empty");
  std::vector<VertexId> all(mesh.num_vertices());
  std::iota(all.begin(), all.end(), 0);
  return nearest_to_centroid(mesh, all);
}

std::vector<VertexId> component_centers(const SurfaceMesh& mesh, const Components& comps) {
  std::vector<std::vector<VertexId>> members(static_cast<std::size_t>(comps.count));
  for (std::size_t v = 0; v < comps.label.size(); ++v)
    members[static_cast<std::size_t>(comps.label[v])].push_back(static_cast<VertexId>(v));
  std::vector<VertexId> centers;
  centers.reserve(members.size());
  for (const auto& m : members) centers.push_back(nearest_to_centroid(mesh, m));
  return centers;
}

std::optional<std::size_t> AnchorSet::find_label(int label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  return std::nullopt;
}

void AnchorSet::sort_by_label() {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return labels[a] < labels[b]; });
  AnchorSet sorted;
  sorted.detection_radius = detection_radius;
  for (auto i : order) {
    sorted.vertices.push_back(vertices[i]);
    sorted.labels.push_back(labels[i]);
    sorted.positions.push_back(positions[i]);
  }
  *this = std::move(sorted);
}

AnchorSet detect_anchors(const SurfaceMesh& mesh, double radius) {
  if (!(radius > 0.0)) throw UsageError("detect_anchors: radius must be > 0");
  AnchorSet out;
  out.detection_radius = radius;
  if (mesh.empty()) {
    warn("detect_anchors: empty mesh, no anchors");
    return out;
  }

  const Components comps = connected_components(mesh);
  const std::vector<VertexId> centers = component_centers(mesh, comps);
  const std::vector<double> center_dist = multi_source_distances(mesh, centers);

  BallProbe probe(mesh);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const auto v = static_cast<VertexId>(i);
    // Any edge shorter than the radius puts its endpoint inside the ball.
    bool local_max = true;
    for (const Neighbor& nb : mesh.neighbors(v)) {
      if (nb.length < radius && center_dist[nb.vertex] >= center_dist[v]) {
        local_max = false;
        break;
      }
    }
    if (!local_max) continue;
    if (probe.has_higher_neighbor(v, radius, center_dist)) continue;
    out.labels.push_back(static_cast<int>(out.vertices.size()));
    out.vertices.push_back(v);
    out.positions.push_back(mesh.vertex(v));
  }
  if (out.empty()) warn("detect_anchors: no anchors found");
  return out;
}

AnchorSet order_anchors(const AnchorSet& current, const AnchorSet& reference,
                        double max_distance) {
  struct Pair {
    double distance;
    std::size_t cur;
    std::size_t ref;
  };
  std::vector<Pair> pairs;
  for (std::size_t c = 0; c < current.size(); ++c)
    for (std::size_t r = 0; r < reference.size(); ++r) {
      const double d = (current.positions[c] - reference.positions[r]).norm();
      if (d <= max_distance) pairs.push_back({d, c, r});
    }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if (a.cur != b.cur) return a.cur < b.cur;
    return a.ref < b.ref;
  });

  AnchorSet out = current;
  std::vector<char> cur_done(current.size(), 0), ref_used(reference.size(), 0);
  for (const Pair& p : pairs) {
    if (cur_done[p.cur] || ref_used[p.ref]) continue;
    out.labels[p.cur] = reference.labels[p.ref];
    cur_done[p.cur] = ref_used[p.ref] = 1;
  }

  int next_label = 0;
  for (int l : reference.labels) next_label = std::max(next_label, l + 1);
  for (std::size_t c = 0; c < current.size(); ++c)
    if (cur_done[c]) next_label = std::max(next_label, out.labels[c] + 1);
  for (std::size_t c = 0; c < current.size(); ++c)
    if (!cur_done[c]) out.labels[c] = next_label++;
  out.sort_by_label();
  return out;
}

AnchorSet order_anchors(const AnchorSet& current, const AnchorSet& reference,
                        const SurfaceMesh& mesh, const SurfaceMesh& ref_mesh) {
  AnchorSet cur = current;
  AnchorSet ref = reference;
  for (std::size_t i = 0; i < cur.size(); ++i) cur.positions[i] = mesh.vertex(cur.vertices[i]);
  for (std::size_t i = 0; i < ref.size(); ++i) ref.positions[i] = ref_mesh.vertex(ref.vertices[i]);
  return order_anchors(cur, ref);
}

}  // namespace geotrack
