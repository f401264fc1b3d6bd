#pragma once

// Persistence and reporting: partition/Commander/network snapshots, metrics
// CSV, refinement logs, visit heatmaps, and theory reports.

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "star/agents.hpp"
#include "star/geometry.hpp"
#include "star/star_loop.hpp"
#include "star/theory.hpp"

namespace star {

inline constexpr int kPartitionFormatVersion = 1;
inline constexpr int kCommanderFormatVersion = 1;

void write_partition_json(std::ostream& out, const Partition& p);
/// Throws FormatError on malformed input or a version mismatch.
Partition read_partition_json(std::istream& in);
void save_partition(const std::string& path, const Partition& p);
Partition load_partition(const std::string& path);

/// Epsilon and reachability edges (the values live in the CSV table).
void write_commander_json(std::ostream& out, const QTable& q);
void read_commander_json(std::istream& in, QTable& q);
void save_qtable(const std::string& csv_path, const std::string& json_path, const QTable& q);
QTable load_qtable(const std::string& csv_path, const std::string& json_path, const std::vector<GoalId>& goals,
                   CommanderConfig cfg);

/// Header: step,episode,success_rate,mean_return,generation,goal_count,fm_loss,epsilon
void write_metrics_csv(std::ostream& out, const Metrics& m);
void metrics_csv(const Metrics& m, const std::string& path);
/// Wall-clock seconds per evaluation point (kept apart so metrics.csv stays deterministic).
void write_timing_csv(std::ostream& out, const Metrics& m);

void write_refinements_jsonl(std::ostream& out, const std::vector<LoggedRefinement>& events);

/// One rectangle per goal (first two oracle axes), fill opacity from the
/// normalized visit count, walls in grey.
void write_heatmap_svg(std::ostream& out, const Partition& p, const std::map<GoalId, int>& visits,
                       const std::vector<Box>& walls);
void heatmap_svg(const Partition& p, const std::map<GoalId, int>& visits, const std::vector<Box>& walls,
                 const std::string& path);

std::string audit_to_json(const theory::AbstractionAudit& a);
std::string bound_check_to_json(const theory::BoundCheck& b);
std::string refinement_report_to_json(const theory::RefinementReport& r);
void write_bounds_csv(std::ostream& out, const std::vector<theory::BoundCheck>& rows);

/// Run directory snapshot: partition_gen<N>.json, qtable.csv, commander.json, nets/*.bin.
void save_snapshot(const std::string& run_dir, const Trainer& t);
struct Snapshot {
    Partition partition;
    QTable qtable;
    nn::DenseNet controller_actor;
    nn::DenseNet tutor_actor;
};
/// Loads the highest-generation partition found in run_dir.
Snapshot load_snapshot(const std::string& run_dir, const RunConfig& cfg);

}  // namespace star
