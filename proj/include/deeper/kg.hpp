#pragma once

#include <cstddef>
#include <deque>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "deeper/core.hpp"

namespace deeper::kg {

struct KGEntity {
    int index = -1;
    std::string name;
    std::string entity_type;
    std::string source_vocab;
    std::string source_id;
};

struct KGEdge {
    int head = -1;
    std::string relation;
    std::string display_relation;
    int tail = -1;
};

enum class MatchKind { exact, similarity };

struct NormalizedEntity {
    std::string query;
    KGEntity entity;
    MatchKind match_kind = MatchKind::exact;
    double score = 1.0;
};

struct GraphPath {
    std::vector<int> nodes;             // entity indices, head first
    std::vector<std::string> relations; // relations.size() == nodes.size() - 1

    std::size_t length() const { return relations.size(); }
};

/// Character trigrams of the normalized form; strings shorter than three
/// characters contribute themselves as a single gram.
inline std::set<std::string> trigrams(std::string_view text) {
    std::string s = normalize_text(text);
    std::set<std::string> grams;
    if (s.size() < 3) {
        if (!s.empty()) grams.insert(s);
        return grams;
    }
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) grams.insert(s.substr(i, 3));
    return grams;
}

inline double trigram_jaccard(std::string_view a, std::string_view b) {
    auto ga = trigrams(a);
    auto gb = trigrams(b);
    if (ga.empty() && gb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g);
    std::size_t uni = ga.size() + gb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Immutable after load; every query operation is a const read.
class KnowledgeGraph {
public:
    static constexpr double kDefaultSimilarityThreshold = 0.5;
    static constexpr std::size_t kDefaultSimilarityCandidates = 5;
    static constexpr std::size_t kDefaultMaxPaths = 10;

    const std::vector<KGEntity>& entities() const { return entities_; }
    const std::vector<KGEdge>& edges() const { return edges_; }
    std::size_t entity_count() const { return entities_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    bool has_entity(int index) const { return by_index_.count(index) > 0; }

    const KGEntity& entity(int index) const {
        auto it = by_index_.find(index);
        require(it != by_index_.end(), ErrorCode::not_found,
                "unknown entity index " + std::to_string(index));
        return entities_[it->second];
    }

    std::optional<KGEntity> find_by_name(std::string_view name) const {
        auto it = name_index_.find(normalize_text(name));
        if (it == name_index_.end() || it->second.empty()) return std::nullopt;
        return entity(it->second.front());
    }

    /// Exact (case-folded, whitespace-collapsed) matches first at score 1.0;
    /// otherwise trigram-Jaccard candidates at or above the threshold,
    /// descending score, capped at max_candidates.
    std::vector<NormalizedEntity> get_normalized_entity(
        std::string_view query,
        double threshold = kDefaultSimilarityThreshold,
        std::size_t max_candidates = kDefaultSimilarityCandidates) const {
        require(!collapse_whitespace(query).empty(), ErrorCode::precondition,
                "get_normalized_entity: empty query");
        std::vector<NormalizedEntity> out;
        const std::string norm = normalize_text(query);
        auto exact = name_index_.find(norm);
        if (exact != name_index_.end()) {
            for (int idx : exact->second) {
                out.push_back({std::string(query), entity(idx), MatchKind::exact, 1.0});
            }
            return out;
        }
        // score descending, then ascending index on ties
        std::vector<std::pair<double, int>> scored;
        for (const auto& e : entities_) {
            double s = trigram_jaccard(norm, e.name);
            if (s >= threshold) scored.emplace_back(s, e.index);
        }
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        if (scored.size() > max_candidates) scored.resize(max_candidates);
        for (const auto& [s, idx] : scored) {
            out.push_back({std::string(query), entity(idx), MatchKind::similarity, s});
        }
        return out;
    }

    /// All tails t with an edge (head, relation, t), ascending index.
    std::vector<KGEntity> get_tail_entity_by_relation(const KGEntity& head,
                                                      std::string_view relation) const {
        require_known(head);
        std::vector<KGEntity> out;
        for (std::size_t ei : out_edges(head.index)) {
            const KGEdge& e = edges_[ei];
            if (e.relation == relation) out.push_back(entity(e.tail));
        }
        sort_by_index(out);
        dedupe_by_index(out);
        return out;
    }

    /// All one-hop tails of the requested entity type, ascending index.
    std::vector<KGEntity> get_tail_entity_by_type(const KGEntity& head,
                                                  std::string_view tail_type) const {
        require_known(head);
        std::vector<KGEntity> out;
        for (std::size_t ei : out_edges(head.index)) {
            const KGEntity& t = entity(edges_[ei].tail);
            if (t.entity_type == tail_type) out.push_back(t);
        }
        sort_by_index(out);
        dedupe_by_index(out);
        return out;
    }

    /// Relations on direct head->tail edges, ranked by global relation
    /// frequency (descending), then lexicographic.
    std::vector<std::string> get_relation_type(const KGEntity& head,
                                               const KGEntity& tail) const {
        require_known(head);
        require_known(tail);
        std::set<std::string> direct;
        for (std::size_t ei : out_edges(head.index)) {
            const KGEdge& e = edges_[ei];
            if (e.tail == tail.index) direct.insert(e.relation);
        }
        std::vector<std::string> out(direct.begin(), direct.end());
        std::sort(out.begin(), out.end(), [this](const std::string& a, const std::string& b) {
            std::size_t fa = relation_frequency(a);
            std::size_t fb = relation_frequency(b);
            if (fa != fb) return fa > fb;
            return a < b;
        });
        return out;
    }

    /// Up to max_paths minimum-hop directed paths head->tail. All returned
    /// paths share the minimum length. Tie order: lexicographic on the node
    /// index sequence, then on the relation sequence for equal node
    /// sequences. head == tail yields the single zero-length path.
    std::vector<GraphPath> get_shortest_paths(const KGEntity& head, const KGEntity& tail,
                                              std::size_t max_paths = kDefaultMaxPaths) const {
        require_known(head);
        require_known(tail);
        require(max_paths >= 1, ErrorCode::precondition, "max_paths must be >= 1");
        if (head.index == tail.index) {
            return {GraphPath{{head.index}, {}}};
        }
        auto dist = bfs_distances(head.index, /*reversed=*/false);
        auto it = dist.find(tail.index);
        if (it == dist.end()) return {};
        auto rdist = bfs_distances(tail.index, /*reversed=*/true);
        PathSink sink{max_paths, {}};
        NodeWalk walk{{head.index}, {}};
        enumerate_paths(walk, tail.index, it->second, dist, rdist, sink);
        return std::move(sink.paths);
    }

    /// Shortest paths among walks whose intermediate nodes include at least
    /// one node of via_type, where any occurrence of the head or tail entity
    /// never counts as intermediate. May be longer than the unconstrained
    /// shortest path; empty when no qualifying walk exists.
    std::vector<GraphPath> get_shortest_path_by_entity_type(
        const KGEntity& head, const KGEntity& tail, std::string_view via_type,
        std::size_t max_paths = kDefaultMaxPaths) const {
        require_known(head);
        require_known(tail);
        require(max_paths >= 1, ErrorCode::precondition, "max_paths must be >= 1");
        if (head.index == tail.index) return {};  // zero-length path has no intermediates

        auto dist2 = product_bfs(head.index, tail.index, via_type, /*reversed=*/false);
        auto goal = dist2.find(key(tail.index, true));
        if (goal == dist2.end()) return {};
        auto rdist2 = product_bfs(head.index, tail.index, via_type, /*reversed=*/true);
        PathSink sink{max_paths, {}};
        NodeWalk walk{{head.index}, {}};
        enumerate_constrained(walk, false, head.index, tail.index, via_type, goal->second,
                              dist2, rdist2, sink);
        return std::move(sink.paths);
    }

    std::size_t relation_frequency(const std::string& relation) const {
        auto it = relation_freq_.find(relation);
        return it == relation_freq_.end() ? 0 : it->second;
    }

    /// generic-tsv: head_name, head_type, relation, tail_name, tail_type.
    void write_generic_tsv(std::ostream& os) const {
        os << "head_name\thead_type\trelation\ttail_name\ttail_type\n";
        for (const auto& e : edges_) {
            const KGEntity& h = entity(e.head);
            const KGEntity& t = entity(e.tail);
            os << h.name << '\t' << h.entity_type << '\t' << e.relation << '\t'
               << t.name << '\t' << t.entity_type << '\n';
        }
    }

private:
    friend class GraphBuilder;

    // A node walk under construction plus the per-step relation options; the
    // relation cartesian product is expanded once the node sequence is
    // complete, keeping tie order node-lexicographic first.
    struct NodeWalk {
        std::vector<int> nodes;
        std::vector<std::vector<std::string>> rel_options;
    };

    struct PathSink {
        std::size_t cap;
        std::vector<GraphPath> paths;

        bool full() const { return paths.size() >= cap; }

        void expand(const NodeWalk& walk) {
            std::vector<std::size_t> pick(walk.rel_options.size(), 0);
            while (!full()) {
                GraphPath p;
                p.nodes = walk.nodes;
                p.relations.reserve(pick.size());
                for (std::size_t i = 0; i < pick.size(); ++i) {
                    p.relations.push_back(walk.rel_options[i][pick[i]]);
                }
                paths.push_back(std::move(p));
                // odometer over relation choices, last position fastest
                std::size_t i = pick.size();
                while (i > 0) {
                    --i;
                    if (++pick[i] < walk.rel_options[i].size()) break;
                    pick[i] = 0;
                    if (i == 0) return;
                }
                if (pick.empty()) return;
            }
        }
    };

    std::size_t key(int node, bool flag) const {
        return static_cast<std::size_t>(node) * 2 + (flag ? 1 : 0);
    }

    void require_known(const KGEntity& e) const {
        require(has_entity(e.index) && entity(e.index).name == e.name, ErrorCode::not_found,
                "entity not in graph: " + e.name);
    }

    const std::vector<std::size_t>& out_edges(int head) const {
        static const std::vector<std::size_t> empty;
        auto it = adjacency_.find(head);
        return it == adjacency_.end() ? empty : it->second;
    }

    const std::vector<std::size_t>& in_edges(int tail) const {
        static const std::vector<std::size_t> empty;
        auto it = reverse_.find(tail);
        return it == reverse_.end() ? empty : it->second;
    }

    static void sort_by_index(std::vector<KGEntity>& v) {
        std::sort(v.begin(), v.end(),
                  [](const KGEntity& a, const KGEntity& b) { return a.index < b.index; });
    }

    static void dedupe_by_index(std::vector<KGEntity>& v) {
        v.erase(std::unique(v.begin(), v.end(),
                            [](const KGEntity& a, const KGEntity& b) {
                                return a.index == b.index;
                            }),
                v.end());
    }

    std::unordered_map<int, std::size_t> bfs_distances(int source, bool reversed) const {
        std::unordered_map<int, std::size_t> dist;
        std::deque<int> frontier{source};
        dist[source] = 0;
        while (!frontier.empty()) {
            int u = frontier.front();
            frontier.pop_front();
            const auto& slots = reversed ? in_edges(u) : out_edges(u);
            for (std::size_t ei : slots) {
                int v = reversed ? edges_[ei].head : edges_[ei].tail;
                if (!dist.count(v)) {
                    dist[v] = dist[u] + 1;
                    frontier.push_back(v);
                }
            }
        }
        return dist;
    }

    /// DFS over the shortest-path DAG restricted to nodes that still reach
    /// the target on a shortest route, so no dead branch is ever explored.
    void enumerate_paths(NodeWalk& walk, int target, std::size_t dtail,
                         const std::unordered_map<int, std::size_t>& dist,
                         const std::unordered_map<int, std::size_t>& rdist,
                         PathSink& sink) const {
        if (sink.full()) return;
        int u = walk.nodes.back();
        std::size_t du = walk.nodes.size() - 1;
        if (u == target) {
            sink.expand(walk);
            return;
        }
        std::map<int, std::set<std::string>> next;
        for (std::size_t ei : out_edges(u)) {
            const KGEdge& e = edges_[ei];
            auto dv = dist.find(e.tail);
            auto rv = rdist.find(e.tail);
            if (dv != dist.end() && dv->second == du + 1 && rv != rdist.end() &&
                rv->second == dtail - du - 1) {
                next[e.tail].insert(e.relation);
            }
        }
        for (auto& [v, rels] : next) {
            if (sink.full()) return;
            walk.nodes.push_back(v);
            walk.rel_options.emplace_back(rels.begin(), rels.end());
            enumerate_paths(walk, target, dtail, dist, rdist, sink);
            walk.nodes.pop_back();
            walk.rel_options.pop_back();
        }
    }

    bool counts_as_via(int node, int source, int target, std::string_view via_type) const {
        return node != source && node != target && entity(node).entity_type == via_type;
    }

    /// BFS over (node, seen-via) states. Forward: the flag on arrival at v
    /// covers every node already left behind. Reversed: distances to the
    /// goal state (target, true).
    std::unordered_map<std::size_t, std::size_t> product_bfs(int source, int target,
                                                             std::string_view via_type,
                                                             bool reversed) const {
        std::unordered_map<std::size_t, std::size_t> dist;
        std::deque<std::pair<int, bool>> frontier;
        if (!reversed) {
            dist[key(source, false)] = 0;
            frontier.emplace_back(source, false);
        } else {
            dist[key(target, true)] = 0;
            frontier.emplace_back(target, true);
        }
        while (!frontier.empty()) {
            auto [u, f] = frontier.front();
            frontier.pop_front();
            std::size_t du = dist[key(u, f)];
            if (!reversed) {
                bool nf = f || counts_as_via(u, source, target, via_type);
                for (std::size_t ei : out_edges(u)) {
                    int v = edges_[ei].tail;
                    if (!dist.count(key(v, nf))) {
                        dist[key(v, nf)] = du + 1;
                        frontier.emplace_back(v, nf);
                    }
                }
            } else {
                // predecessors (p, pf) with pf || counts(p) == f
                for (std::size_t ei : in_edges(u)) {
                    int p = edges_[ei].head;
                    bool pc = counts_as_via(p, source, target, via_type);
                    for (bool pf : {false, true}) {
                        if ((pf || pc) != f) continue;
                        if (!dist.count(key(p, pf))) {
                            dist[key(p, pf)] = du + 1;
                            frontier.emplace_back(p, pf);
                        }
                    }
                }
            }
        }
        return dist;
    }

    void enumerate_constrained(NodeWalk& walk, bool flag, int source, int target,
                               std::string_view via_type, std::size_t dgoal,
                               const std::unordered_map<std::size_t, std::size_t>& dist2,
                               const std::unordered_map<std::size_t, std::size_t>& rdist2,
                               PathSink& sink) const {
        if (sink.full()) return;
        int u = walk.nodes.back();
        std::size_t du = walk.nodes.size() - 1;
        if (u == target && flag && du == dgoal) {
            sink.expand(walk);
            return;
        }
        if (du >= dgoal) return;
        bool nf = flag || counts_as_via(u, source, target, via_type);
        std::map<int, std::set<std::string>> next;
        for (std::size_t ei : out_edges(u)) {
            const KGEdge& e = edges_[ei];
            auto dv = dist2.find(key(e.tail, nf));
            auto rv = rdist2.find(key(e.tail, nf));
            if (dv != dist2.end() && dv->second == du + 1 && rv != rdist2.end() &&
                rv->second == dgoal - du - 1) {
                next[e.tail].insert(e.relation);
            }
        }
        for (auto& [v, rels] : next) {
            if (sink.full()) return;
            walk.nodes.push_back(v);
            walk.rel_options.emplace_back(rels.begin(), rels.end());
            enumerate_constrained(walk, nf, source, target, via_type, dgoal, dist2, rdist2,
                                  sink);
            walk.nodes.pop_back();
            walk.rel_options.pop_back();
        }
    }

    std::vector<KGEntity> entities_;
    std::vector<KGEdge> edges_;
    std::unordered_map<int, std::size_t> by_index_;                    // entity index -> slot
    std::unordered_map<int, std::vector<std::size_t>> adjacency_;      // head -> edge slots
    std::unordered_map<int, std::vector<std::size_t>> reverse_;        // tail -> edge slots
    std::unordered_map<std::string, std::vector<int>> name_index_;     // normalized name -> indices
    std::unordered_map<std::string, std::size_t> relation_freq_;
};

/// Mutable construction side of the immutable graph. Loading is exclusive
/// and single-threaded; the built graph is then safe for unlimited readers.
class GraphBuilder {
public:
    void add_entity(KGEntity entity) {
        require(!entity.name.empty(), ErrorCode::validation,
                "entity name empty (index " + std::to_string(entity.index) + ")");
        require(!entity.entity_type.empty(), ErrorCode::validation,
                "entity type empty for '" + entity.name + "'");
        require(!g_.by_index_.count(entity.index), ErrorCode::validation,
                "duplicate entity index " + std::to_string(entity.index));
        g_.by_index_[entity.index] = g_.entities_.size();
        g_.name_index_[normalize_text(entity.name)].push_back(entity.index);
        g_.entities_.push_back(std::move(entity));
    }

    /// Reuses the entity when (name, type) is already present.
    int add_or_get_entity(const std::string& name, const std::string& type) {
        auto key = normalize_text(name) + "\x1f" + type;
        auto it = dedup_.find(key);
        if (it != dedup_.end()) return it->second;
        int index = next_index_++;
        add_entity({index, name, type, "", ""});
        dedup_[key] = index;
        return index;
    }

    void add_edge(KGEdge edge, std::size_t line = 0) {
        auto where = line ? " (line " + std::to_string(line) + ")" : std::string();
        require(g_.by_index_.count(edge.head), ErrorCode::validation,
                "dangling edge head " + std::to_string(edge.head) + where);
        require(g_.by_index_.count(edge.tail), ErrorCode::validation,
                "dangling edge tail " + std::to_string(edge.tail) + where);
        auto sig = std::to_string(edge.head) + "\x1f" + edge.relation + "\x1f" +
                   std::to_string(edge.tail);
        if (edge_sigs_.count(sig)) return;  // (head, relation, tail) unique
        edge_sigs_.insert(sig);
        std::size_t slot = g_.edges_.size();
        g_.adjacency_[edge.head].push_back(slot);
        g_.reverse_[edge.tail].push_back(slot);
        g_.relation_freq_[edge.relation] += 1;
        g_.edges_.push_back(std::move(edge));
    }

    KnowledgeGraph build() { return std::move(g_); }

private:
    KnowledgeGraph g_;
    std::unordered_map<std::string, int> dedup_;
    std::unordered_set<std::string> edge_sigs_;
    int next_index_ = 0;
};

enum class GraphFormat { primekg_csv, generic_tsv };

inline GraphFormat parse_graph_format(std::string_view s) {
    if (s == "primekg-csv") return GraphFormat::primekg_csv;
    if (s == "generic-tsv") return GraphFormat::generic_tsv;
    fail(ErrorCode::precondition, "unknown graph format: " + std::string(s));
}

namespace detail {

/// Split one CSV record, honoring double quotes. PrimeKG exports quote
/// fields containing commas.
inline std::vector<std::string> split_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline int parse_int(const std::string& s, std::size_t line_no, const char* what) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        require(pos == s.size(), ErrorCode::parse, "");
        return v;
    } catch (const std::exception&) {
        fail(ErrorCode::parse, std::string("malformed ") + what + " '" + s + "' at line " +
                                   std::to_string(line_no));
    }
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace detail

/// Published PrimeKG column layout.
inline const std::vector<std::string>& primekg_header() {
    static const std::vector<std::string> cols = {
        "relation", "display_relation", "x_index", "x_id", "x_type", "x_name",
        "x_source", "y_index", "y_id", "y_type", "y_name", "y_source"};
    return cols;
}

inline KnowledgeGraph load_graph(std::istream& in, GraphFormat format) {
    GraphBuilder builder;
    std::string line;
    std::size_t line_no = 0;

    require(static_cast<bool>(std::getline(in, line)), ErrorCode::parse,
            "empty input: missing header");
    line = detail::strip_cr(line);
    ++line_no;

    if (format == GraphFormat::primekg_csv) {
        auto header = detail::split_csv_row(line);
        require(header == primekg_header(), ErrorCode::parse,
                "header does not match primekg-csv layout");
        // Entities are declared inline on every row; re-declarations must agree.
        std::unordered_map<int, KGEntity> declared;
        struct Row {
            KGEdge edge;
            std::size_t line;
        };
        std::vector<Row> rows;
        while (std::getline(in, line)) {
            ++line_no;
            line = detail::strip_cr(line);
            if (line.empty()) continue;
            auto f = detail::split_csv_row(line);
            require(f.size() == 12, ErrorCode::parse,
                    "malformed row at line " + std::to_string(line_no) +
                        ": expected 12 fields, got " + std::to_string(f.size()));
            int x = detail::parse_int(f[2], line_no, "x_index");
            int y = detail::parse_int(f[7], line_no, "y_index");
            KGEntity ex{x, f[5], f[4], f[6], f[3]};
            KGEntity ey{y, f[10], f[9], f[11], f[8]};
            for (const auto& e : {ex, ey}) {
                auto it = declared.find(e.index);
                if (it == declared.end()) {
                    declared[e.index] = e;
                } else {
                    require(it->second.name == e.name && it->second.entity_type == e.entity_type,
                            ErrorCode::validation,
                            "duplicate entity index " + std::to_string(e.index) +
                                " with conflicting declarations at line " +
                                std::to_string(line_no));
                }
            }
            rows.push_back({KGEdge{x, f[0], f[1], y}, line_no});
        }
        std::vector<int> order;
        order.reserve(declared.size());
        for (const auto& [idx, e] : declared) order.push_back(idx);
        std::sort(order.begin(), order.end());
        for (int idx : order) builder.add_entity(declared[idx]);
        for (const auto& r : rows) builder.add_edge(r.edge, r.line);
    } else {
        require(line == "head_name\thead_type\trelation\ttail_name\ttail_type",
                ErrorCode::parse, "header does not match generic-tsv layout");
        while (std::getline(in, line)) {
            ++line_no;
            line = detail::strip_cr(line);
            if (line.empty()) continue;
            auto f = split(line, '\t');
            require(f.size() == 5, ErrorCode::parse,
                    "malformed row at line " + std::to_string(line_no) +
                        ": expected 5 fields, got " + std::to_string(f.size()));
            int h = builder.add_or_get_entity(f[0], f[1]);
            int t = builder.add_or_get_entity(f[3], f[4]);
            builder.add_edge(KGEdge{h, f[2], f[2], t}, line_no);
        }
    }
    return builder.build();
}

inline KnowledgeGraph load_graph_file(const std::string& path, GraphFormat format) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::not_found, "cannot open graph file: " + path);
    return load_graph(in, format);
}

inline json to_json(const KGEntity& e) {
    return json{{"index", e.index},
                {"name", e.name},
                {"entity_type", e.entity_type},
                {"source_vocab", e.source_vocab},
                {"source_id", e.source_id}};
}

inline json to_json(const GraphPath& p, const KnowledgeGraph& g) {
    json nodes = json::array();
    for (int n : p.nodes) nodes.push_back(to_json(g.entity(n)));
    return json{{"nodes", nodes}, {"relations", p.relations}};
}

}  // namespace deeper::kg
