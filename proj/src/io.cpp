#include "star/io.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "star/errors.hpp"

namespace star {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json box_json(const Box& b) { return {{"lower", b.lower()}, {"upper", b.upper()}}; }

Box box_from_json(const json& j) {
    return Box(j.at("lower").get<std::vector<double>>(), j.at("upper").get<std::vector<double>>());
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw std::runtime_error("cannot write " + path);
    return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw FormatError("cannot read " + path);
    return in;
}

}  // namespace

// ----------------------------------------------------------------- partition

void write_partition_json(std::ostream& out, const Partition& p) {
    json j;
    j["format"] = "star-partition";
    j["version"] = kPartitionFormatVersion;
    j["generation"] = p.generation();
    j["next_id"] = p.next_id();
    j["bounds"] = box_json(p.bounds());
    json goals = json::array();
    for (const auto& [id, box] : p.goals()) {
        json g = box_json(box);
        g["id"] = id.value;
        goals.push_back(g);
    }
    j["goals"] = goals;
    out << j.dump(1) << '\n';
}

Partition read_partition_json(std::istream& in) {
    try {
        const json j = json::parse(in);
        if (j.at("format").get<std::string>() != "star-partition") throw FormatError("partition: wrong format tag");
        if (j.at("version").get<int>() != kPartitionFormatVersion)
            throw FormatError("partition: unsupported version " + std::to_string(j.at("version").get<int>()));
        std::map<GoalId, Box> goals;
        for (const json& g : j.at("goals")) {
            const GoalId id{g.at("id").get<std::uint64_t>()};
            if (!goals.emplace(id, box_from_json(g)).second) throw FormatError("partition: duplicate goal id");
        }
        return Partition::restore(box_from_json(j.at("bounds")), std::move(goals),
                                  j.at("generation").get<std::int64_t>(), j.at("next_id").get<std::uint64_t>());
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("partition: ") + e.what());
    }
}

void save_partition(const std::string& path, const Partition& p) {
    auto out = open_out(path);
    write_partition_json(out, p);
}

Partition load_partition(const std::string& path) {
    auto in = open_in(path);
    return read_partition_json(in);
}

// ----------------------------------------------------------------- commander

void write_commander_json(std::ostream& out, const QTable& q) {
    json j;
    j["format"] = "star-commander";
    j["version"] = kCommanderFormatVersion;
    j["epsilon"] = q.epsilon();
    json edges = json::array();
    for (const auto& [from, tos] : q.reach_graph())
        for (GoalId t : tos) edges.push_back({from.value, t.value});
    j["reach_edges"] = edges;
    out << j.dump(1) << '\n';
}

void read_commander_json(std::istream& in, QTable& q) {
    try {
        const json j = json::parse(in);
        if (j.at("format").get<std::string>() != "star-commander") throw FormatError("commander: wrong format tag");
        if (j.at("version").get<int>() != kCommanderFormatVersion)
            throw FormatError("commander: unsupported version " + std::to_string(j.at("version").get<int>()));
        QTable copy = q;
        copy.set_epsilon(j.at("epsilon").get<double>());
        for (const json& e : j.at("reach_edges")) {
            const GoalId a{e.at(0).get<std::uint64_t>()}, b{e.at(1).get<std::uint64_t>()};
            if (!copy.has(a) || !copy.has(b)) throw FormatError("commander: edge refers to an unknown goal");
            copy.add_reach_edge(a, b);
        }
        q = std::move(copy);
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("commander: ") + e.what());
    }
}

void save_qtable(const std::string& csv_path, const std::string& json_path, const QTable& q) {
    auto csv = open_out(csv_path);
    write_qtable_csv(csv, q);
    auto js = open_out(json_path);
    write_commander_json(js, q);
}

QTable load_qtable(const std::string& csv_path, const std::string& json_path, const std::vector<GoalId>& goals,
                   CommanderConfig cfg) {
    auto csv = open_in(csv_path);
    QTable q = read_qtable_csv(csv, goals, cfg);
    auto js = open_in(json_path);
    read_commander_json(js, q);
    return q;
}

// ------------------------------------------------------------------- metrics

void write_metrics_csv(std::ostream& out, const Metrics& m) {
    out << "step,episode,success_rate,mean_return,generation,goal_count,fm_loss,epsilon\n";
    out << std::setprecision(12);
    for (const EvalPoint& p : m.evals)
        out << p.step << ',' << p.episode << ',' << p.success_rate << ',' << p.mean_return << ',' << p.generation
            << ',' << p.goal_count << ',' << p.fm_loss << ',' << p.epsilon << '\n';
}

void metrics_csv(const Metrics& m, const std::string& path) {
    auto out = open_out(path);
    write_metrics_csv(out, m);
    if (!out) throw std::runtime_error("failed writing " + path);
}

void write_timing_csv(std::ostream& out, const Metrics& m) {
    out << "step,wall_seconds\n";
    for (const EvalPoint& p : m.evals) out << p.step << ',' << p.wall_seconds << '\n';
}

void write_refinements_jsonl(std::ostream& out, const std::vector<LoggedRefinement>& events) {
    auto ids = [](const std::vector<GoalId>& v) {
        json a = json::array();
        for (GoalId g : v) a.push_back(g.value);
        return a;
    };
    auto boxes = [](const std::vector<Box>& v) {
        json a = json::array();
        for (const Box& b : v) a.push_back(box_json(b));
        return a;
    };
    for (const LoggedRefinement& l : events) {
        const RefinementEvent& e = l.event;
        json j{{"step", l.step},
               {"generation", e.generation},
               {"source", e.source.value},
               {"target", e.target.value},
               {"status", e.status}};
        if (e.source_box.dim() > 0) j["source_box"] = box_json(e.source_box);
        if (e.status == "split") {
            j["reachable_ids"] = ids(e.reachable_ids);
            j["unreachable_ids"] = ids(e.unreachable_ids);
            j["reachable_boxes"] = boxes(e.reachable_boxes);
            j["unreachable_boxes"] = boxes(e.unreachable_boxes);
        }
        out << j.dump() << '\n';
    }
}

// ------------------------------------------------------------------- heatmap

void write_heatmap_svg(std::ostream& out, const Partition& p, const std::map<GoalId, int>& visits,
                       const std::vector<Box>& walls) {
    const Box& b = p.bounds();
    const double px = 20.0;
    const double x0 = b.lower(0);
    const double y1 = b.dim() > 1 ? b.upper(1) : 1.0;
    const double w = b.width(0) * px;
    const double h = (b.dim() > 1 ? b.width(1) : 1.0) * px;
    auto lo1 = [&](const Box& r) { return r.dim() > 1 ? r.lower(1) : 0.0; };
    auto hi1 = [&](const Box& r) { return r.dim() > 1 ? r.upper(1) : 1.0; };
    auto rect = [&](const Box& r) {
        std::ostringstream s;
        s << std::setprecision(10) << "x=\"" << (r.lower(0) - x0) * px << "\" y=\"" << (y1 - hi1(r)) * px
          << "\" width=\"" << r.width(0) * px << "\" height=\"" << (hi1(r) - lo1(r)) * px << "\"";
        return s.str();
    };
    int max_visits = 0;
    for (const auto& [id, n] : visits) max_visits = std::max(max_visits, n);

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 "
        << w << ' ' << h << "\">\n";
    out << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    for (const Box& wall : walls) {
        const auto clipped = box_intersect(wall, Box({b.lower(0), b.dim() > 1 ? b.lower(1) : 0.0},
                                                     {b.upper(0), b.dim() > 1 ? b.upper(1) : 1.0}));
        if (clipped) out << "<rect class=\"wall\" " << rect(*clipped) << " fill=\"#999999\"/>\n";
    }
    for (const auto& [id, box] : p.goals()) {
        const auto it = visits.find(id);
        const int n = it == visits.end() ? 0 : it->second;
        const double opacity = 0.05 + 0.9 * (max_visits > 0 ? static_cast<double>(n) / max_visits : 0.0);
        out << "<rect class=\"goal\" data-id=\"" << id.value << "\" data-visits=\"" << n << "\" " << rect(box)
            << " fill=\"#d62728\" fill-opacity=\"" << opacity << "\" stroke=\"black\" stroke-width=\"0.5\"/>\n";
    }
    out << "</svg>\n";
}

void heatmap_svg(const Partition& p, const std::map<GoalId, int>& visits, const std::vector<Box>& walls,
                 const std::string& path) {
    auto out = open_out(path);
    write_heatmap_svg(out, p, visits, walls);
}

// -------------------------------------------------------------------- theory

namespace {

json audit_json(const theory::AbstractionAudit& a) {
    json j{{"c1_containment", a.c1},
           {"c2_disjointness", a.c2},
           {"c3_pairwise_reachability", a.c3},
           {"c4_final_goal_epsilon", a.c4},
           {"epsilon", a.epsilon},
           {"pair_reachable", a.pair_reachable},
           {"passed", a.passed()}};
    j["b"] = a.b ? json(*a.b) : json(nullptr);
    return j;
}

}  // namespace

std::string audit_to_json(const theory::AbstractionAudit& a) { return audit_json(a).dump(2); }

std::string bound_check_to_json(const theory::BoundCheck& b) {
    json j{{"name", b.name},     {"m", b.m},         {"k", b.k},     {"gamma", b.gamma},
           {"r_max", b.r_max},   {"v_optimal", b.v_optimal},         {"v_abstract", b.v_abstract},
           {"gap", b.gap},       {"eq1", b.eq1},     {"eq2", b.eq2}, {"holds", b.holds()},
           {"audit", audit_json(b.audit)}};
    return j.dump(2);
}

std::string refinement_report_to_json(const theory::RefinementReport& r) {
    json j{{"refinements", r.refinements},
           {"step_is_refinement", r.step_is_refinement},
           {"coverage", r.coverage},
           {"coverage_monotone", r.coverage_monotone},
           {"final_audit", audit_json(r.final_audit)},
           {"passed", r.passed()}};
    return j.dump(2);
}

void write_bounds_csv(std::ostream& out, const std::vector<theory::BoundCheck>& rows) {
    out << "name,m,k,gamma,r_max,epsilon,b,v_optimal,v_abstract,gap,eq1,eq2,audit_passed,holds\n";
    out << std::setprecision(12);
    for (const auto& r : rows)
        out << r.name << ',' << r.m << ',' << r.k << ',' << r.gamma << ',' << r.r_max << ',' << r.audit.epsilon << ','
            << r.audit.b.value_or(0.0) << ',' << r.v_optimal << ',' << r.v_abstract << ',' << r.gap << ',' << r.eq1
            << ',' << r.eq2 << ',' << (r.audit.passed() ? 1 : 0) << ',' << (r.holds() ? 1 : 0) << '\n';
}

// ------------------------------------------------------------------ snapshot

void save_snapshot(const std::string& run_dir, const Trainer& t) {
    fs::create_directories(fs::path(run_dir) / "nets");
    const fs::path dir(run_dir);
    save_partition((dir / ("partition_gen" + std::to_string(t.partition().generation()) + ".json")).string(),
                   t.partition());
    save_qtable((dir / "qtable.csv").string(), (dir / "commander.json").string(), t.qtable());
    const fs::path nets = dir / "nets";
    nn::save_net((nets / "controller_actor.bin").string(), t.controller().actor);
    nn::save_net((nets / "controller_critic1.bin").string(), t.controller().critic1);
    nn::save_net((nets / "controller_critic2.bin").string(), t.controller().critic2);
    nn::save_net((nets / "tutor_actor.bin").string(), t.tutor().actor);
    nn::save_net((nets / "tutor_critic1.bin").string(), t.tutor().critic1);
    nn::save_net((nets / "tutor_critic2.bin").string(), t.tutor().critic2);
    nn::save_net((nets / "forward_model.bin").string(), t.forward_model().net());
}

Snapshot load_snapshot(const std::string& run_dir, const RunConfig& cfg) {
    const fs::path dir(run_dir);
    if (!fs::is_directory(dir)) throw FormatError("snapshot: no such run directory " + run_dir);
    std::int64_t best = -1;
    fs::path best_path;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.rfind("partition_gen", 0) != 0 || entry.path().extension() != ".json") continue;
        try {
            const std::int64_t g = std::stoll(name.substr(13, name.size() - 13 - 5));
            if (g > best) {
                best = g;
                best_path = entry.path();
            }
        } catch (const std::exception&) {
        }
    }
    if (best < 0) throw FormatError("snapshot: no partition_gen*.json in " + run_dir);
    Snapshot s{load_partition(best_path.string()), {}, {}, {}};
    s.qtable = load_qtable((dir / "qtable.csv").string(), (dir / "commander.json").string(), s.partition.ids(),
                           cfg.commander);
    try {
        s.controller_actor = nn::load_net((dir / "nets" / "controller_actor.bin").string());
        s.tutor_actor = nn::load_net((dir / "nets" / "tutor_actor.bin").string());
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(std::string("snapshot: ") + e.what());
    }
    return s;
}

}  // namespace star
