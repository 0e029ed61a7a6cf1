#pragma once

// Load-balanced assignment of buildings (Case 0) and terrain cells (Case 1)
// to workers.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "meshgen.hpp"
#include "polygon.hpp"

namespace kub {

struct BuildingWeight {
    std::string id;
    double weight = 0;
};

struct PartitionPlan {
    std::size_t n_parts = 1;
    int case_id = 0;
    std::map<std::string, std::size_t> assignment;
    std::vector<double> load;
    std::vector<std::vector<std::string>> members; ///< per part, in assignment order
    // Case 1 only: terrain facet ids and their parts, parallel arrays.
    std::vector<std::uint32_t> env_cells;
    std::vector<std::size_t> env_assignment;
    std::vector<double> env_load;
};

/// Triangle count of each building's mesh, in scene order.
inline std::vector<BuildingWeight> weights(const Scene& scene) {
    std::vector<BuildingWeight> out;
    for (const auto& r : scene.index) out.push_back({r.id, static_cast<double>(r.count)});
    return out;
}

inline std::vector<BuildingWeight> weights(const std::vector<BuildingModel>& buildings) {
    std::vector<BuildingWeight> out;
    for (const auto& b : buildings) out.push_back({b.id, static_cast<double>(building_mesh(b).size())});
    return out;
}

/// Longest-processing-time greedy: heaviest first (ties by id), each to the
/// least-loaded part (ties by lowest index).
inline PartitionPlan partition_case0(std::vector<BuildingWeight> w, std::size_t n_parts) {
    if (n_parts < 1) throw config_error("partition needs at least one part");
    std::sort(w.begin(), w.end(), [](const auto& a, const auto& b) {
        return a.weight > b.weight || (a.weight == b.weight && a.id < b.id);
    });
    PartitionPlan plan;
    plan.n_parts = n_parts;
    plan.load.assign(n_parts, 0.0);
    plan.members.resize(n_parts);
    for (const auto& item : w) {
        if (!(item.weight >= 0)) throw config_error("negative weight for building " + item.id);
        if (plan.assignment.count(item.id)) throw config_error("duplicate building id " + item.id);
        const auto part = static_cast<std::size_t>(std::min_element(plan.load.begin(), plan.load.end()) - plan.load.begin());
        plan.assignment[item.id] = part;
        plan.load[part] += item.weight;
        plan.members[part].push_back(item.id);
    }
    return plan;
}

/// Assigns each terrain cell (facet) to the part owning the nearest building
/// centroid in plan view; distance ties go to the lowest part index.
inline PartitionPlan partition_case1(PartitionPlan plan, const std::map<std::string, Vec2>& centroids,
                                     const TriMesh& terrain) {
    std::vector<std::pair<Vec2, std::size_t>> sites;
    for (const auto& [id, part] : plan.assignment) {
        auto it = centroids.find(id);
        if (it == centroids.end()) throw config_error("no centroid for building " + id);
        sites.push_back({it->second, part});
    }
    plan.case_id = 1;
    plan.env_cells.clear();
    plan.env_assignment.clear();
    plan.env_load.assign(plan.n_parts, 0.0);
    for (const auto& f : faces_of(terrain)) {
        if (f.tag != FaceTag::terrain || f.triangles.empty()) continue;
        const Vec2 c{f.centroid.x, f.centroid.y};
        std::size_t best_part = 0;
        double best = std::numeric_limits<double>::infinity();
        for (const auto& [p, part] : sites) {
            const double d = (p.x - c.x) * (p.x - c.x) + (p.y - c.y) * (p.y - c.y);
            if (d < best || (d == best && part < best_part)) {
                best = d;
                best_part = part;
            }
        }
        plan.env_cells.push_back(f.id);
        plan.env_assignment.push_back(best_part);
        plan.env_load[best_part] += static_cast<double>(f.triangles.size());
    }
    return plan;
}

inline PartitionPlan partition_case1(PartitionPlan plan, const Scene& scene) {
    std::map<std::string, Vec2> centroids;
    for (const auto& b : scene.buildings) centroids[b.id] = centroid(b.footprint);
    return partition_case1(std::move(plan), centroids, scene.mesh);
}

/// Max part load over mean part load.
inline double imbalance(const std::vector<double>& load) {
    if (load.empty()) throw config_error("imbalance of an empty plan");
    double total = 0, peak = 0;
    for (double l : load) {
        total += l;
        peak = std::max(peak, l);
    }
    if (!(total > 0)) throw config_error("imbalance needs a positive total weight");
    return peak / (total / static_cast<double>(load.size()));
}

inline double imbalance(const PartitionPlan& plan) { return imbalance(plan.load); }

inline std::string plan_to_json(const PartitionPlan& plan) {
    nlohmann::ordered_json j;
    j["n_parts"] = plan.n_parts;
    j["case"] = plan.case_id;
    auto parts = nlohmann::ordered_json::array();
    for (std::size_t p = 0; p < plan.n_parts; ++p) {
        nlohmann::ordered_json e;
        e["part"] = p;
        e["load"] = plan.load[p];
        e["buildings"] = plan.members[p];
        if (plan.case_id == 1) {
            std::vector<std::uint32_t> cells;
            for (std::size_t k = 0; k < plan.env_cells.size(); ++k)
                if (plan.env_assignment[k] == p) cells.push_back(plan.env_cells[k]);
            e["env_load"] = plan.env_load[p];
            e["env_cells"] = cells;
        }
        parts.push_back(std::move(e));
    }
    j["parts"] = std::move(parts);
    double total = 0;
    for (double l : plan.load) total += l;
    j["total_load"] = total;
    j["imbalance"] = total > 0 ? imbalance(plan) : 1.0;
    return j.dump(2) + "\n";
}

} // namespace kub
