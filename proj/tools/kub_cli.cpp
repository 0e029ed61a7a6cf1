// kub: command-line front end.
//
// Exit codes: 0 success, 2 configuration error, 3 input parse error,
// 4 runtime error. Logs go to standard error; machine outputs to files.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kub/kub.hpp"

namespace {

using namespace kub;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out;
};

void add_common(CLI::App* app, Common& c, bool needs_config = true) {
    auto* opt = app->add_option("--config", c.config, "run configuration (key = value document)");
    if (needs_config) opt->required();
    app->add_option("--seed", c.seed, "master RNG seed");
    app->add_option("--workers", c.workers, "number of workers")->check(CLI::PositiveNumber);
    app->add_option("--out", c.out, "output directory");
}

RunConfig resolve(const Common& c) {
    RunConfig cfg = load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    if (c.workers) cfg.workers = *c.workers;
    if (!c.out.empty()) cfg.out = c.out;
    cfg.validate();
    return cfg;
}

void ensure_dir(const fs::path& d) {
    std::error_code ec;
    fs::create_directories(d, ec);
    if (ec) throw io_error("cannot create directory " + d.string() + ": " + ec.message());
}

ReportFormat format_of(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    throw config_error("unknown report format '" + s + "' (expected json or csv)");
}

std::vector<unsigned> parse_counts(const std::string& s) {
    std::vector<unsigned> out;
    for (auto f : fmt::split(s, ',')) {
        const auto v = fmt::trim(f);
        if (v.empty()) continue;
        long long n = 0;
        try {
            n = fmt::to_int(v, "worker count");
        } catch (const parse_error&) {
            throw config_error("bad worker count '" + std::string(v) + "'");
        }
        if (n < 1) throw config_error("worker counts must be positive");
        out.push_back(static_cast<unsigned>(n));
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Desk-scale urban building energy pipeline"};
    app.require_subcommand(1);

    Common c;
    auto* reconstruct = app.add_subcommand("reconstruct", "footprints to an OBJ scene");
    add_common(reconstruct, c);

    auto* shading = app.add_subcommand("shading", "shading mask CSV per exterior face");
    add_common(shading, c);

    auto* viewfactor = app.add_subcommand("viewfactor", "building-to-building view factors as JSON");
    add_common(viewfactor, c);

    auto* partition = app.add_subcommand("partition", "partition plan as JSON");
    add_common(partition, c);

    bool aggregate = false;
    std::string archetype;
    auto* simulate_cmd = app.add_subcommand("simulate", "full run: per-building CSVs and a summary");
    add_common(simulate_cmd, c);
    simulate_cmd->add_flag("--aggregate-output", aggregate, "write one combined CSV instead of one per building");
    simulate_cmd->add_option("--archetype", archetype, "archetype name");

    std::string counts = "1,2,4";
    auto* bench = app.add_subcommand("bench", "scaling sweep over worker counts");
    add_common(bench, c);
    bench->add_option("--counts", counts, "comma-separated worker counts (must include 1)");
    bench->add_flag("--aggregate-output", aggregate, "write one combined CSV instead of one per building");

    std::string in_path, from = "json", to = "csv";
    auto* report = app.add_subcommand("report", "convert a benchmark report between json and csv");
    add_common(report, c, false);
    report->add_option("--in", in_path, "input report")->required();
    report->add_option("--from", from, "input format (json or csv)");
    report->add_option("--to", to, "output format (json or csv)");

    std::string kind = "district";
    int nx = 4, ny = 4;
    auto* synth = app.add_subcommand("synth", "write a synthetic input set (footprints, weather, elevation, config)");
    add_common(synth, c, false);
    synth->add_option("--kind", kind, "district or grid")->check(CLI::IsMember({"district", "grid"}));
    synth->add_option("--nx", nx, "grid columns")->check(CLI::PositiveNumber);
    synth->add_option("--ny", ny, "grid rows")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (*reconstruct) {
        const auto cfg = resolve(c);
        const auto loaded = load_scene(cfg);
        ensure_dir(cfg.out);
        write_file(cfg.out / "scene.obj", write_obj(loaded.scene));
        log_line("wrote " + (cfg.out / "scene.obj").string());
    } else if (*shading) {
        const auto cfg = resolve(c);
        const auto loaded = load_scene(cfg);
        const auto thermal = thermal_buildings(loaded.scene, find_archetype(archetype_table(cfg), cfg.archetype));
        const RayScene rays(loaded.scene.mesh);
        std::vector<std::uint32_t> faces;
        for (const auto& s : building_surfaces(thermal)) faces.insert(faces.end(), s.begin(), s.end());
        const auto masks = shading_masks(rays, faces, SkyGrid(cfg.sky_az, cfg.sky_alt), cfg.samples, cfg.seed, cfg.workers);
        ensure_dir(cfg.out / "masks");
        for (const auto& m : masks) write_file(cfg.out / "masks" / ("face-" + std::to_string(m.face) + ".csv"), mask_to_csv(m));
        log_line("wrote " + std::to_string(masks.size()) + " masks to " + (cfg.out / "masks").string());
    } else if (*viewfactor) {
        const auto cfg = resolve(c);
        const auto loaded = load_scene(cfg);
        const auto thermal = thermal_buildings(loaded.scene, find_archetype(archetype_table(cfg), cfg.archetype));
        const RayScene rays(loaded.scene.mesh);
        const auto vf = view_factors(rays, building_surfaces(thermal), cfg.vf_rays, cfg.seed, cfg.workers);
        nlohmann::ordered_json j;
        std::vector<std::string> ids;
        for (const auto& b : thermal) ids.push_back(b.id);
        j["surfaces"] = ids;
        j["rays_per_surface"] = vf.rays_per_surface;
        j["seed"] = vf.seed;
        j["areas"] = vf.areas;
        j["F"] = vf.F;
        j["sigma"] = vf.sigma;
        ensure_dir(cfg.out);
        write_file(cfg.out / "viewfactors.json", j.dump(2) + "\n");
        log_line("wrote " + (cfg.out / "viewfactors.json").string());
    } else if (*partition) {
        const auto cfg = resolve(c);
        const auto loaded = load_scene(cfg);
        auto plan = partition_case0(weights(loaded.scene), cfg.workers);
        if (cfg.partition_case == 1) plan = partition_case1(std::move(plan), loaded.scene);
        ensure_dir(cfg.out);
        write_file(cfg.out / "plan.json", plan_to_json(plan));
        log_line("wrote " + (cfg.out / "plan.json").string() + " (imbalance " + fmt::general(imbalance(plan), 6) + ")");
    } else if (*simulate_cmd) {
        auto cfg = resolve(c);
        if (aggregate) cfg.aggregate_output = true;
        if (!archetype.empty()) cfg.archetype = archetype;
        const auto r = run_pipeline(cfg);
        nlohmann::ordered_json t{{"pre_s", r.timings.pre_s},
                                 {"sim_s", r.timings.sim_s},
                                 {"post_s", r.timings.post_s},
                                 {"wall_s", r.timings.wall_s}};
        write_file(cfg.out / "timings.json", t.dump(2) + "\n");
        log_line("simulated " + std::to_string(r.building_count) + " buildings: total heating " +
                 fmt::general(r.total_heating_kwh, 8) + " kWh; pre " + fmt::fixed(r.timings.pre_s, 6) + " s, sim " +
                 fmt::fixed(r.timings.sim_s, 6) + " s, post " + fmt::fixed(r.timings.post_s, 6) + " s");
    } else if (*bench) {
        auto cfg = resolve(c);
        if (aggregate) cfg.aggregate_output = true;
        const auto rep = bench_scaling(cfg, parse_counts(counts));
        ensure_dir(cfg.out);
        emit_report(rep, ReportFormat::json, cfg.out / "bench.json");
        emit_report(rep, ReportFormat::csv, cfg.out / "bench.csv");
        log_line("wrote " + (cfg.out / "bench.json").string() + (rep.complete ? "" : " (incomplete sweep)"));
        if (!rep.complete) return 4;
    } else if (*report) {
        const auto rep = read_report(read_file(in_path), format_of(from));
        const std::string text = emit_report(rep, format_of(to));
        if (c.out.empty()) throw config_error("report needs --out <file>");
        write_file(c.out, text);
    } else if (*synth) {
        if (c.out.empty()) throw config_error("synth needs --out <directory>");
        const fs::path dir = c.out;
        SyntheticInputs in;
        in.kind = kind;
        in.nx = nx;
        in.ny = ny;
        in.seed = c.seed.value_or(kind == "district" ? 7 : 1);
        in.workers = c.workers.value_or(4);
        write_synthetic_inputs(dir, in);
        log_line("wrote synthetic inputs to " + dir.string());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kub::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const kub::parse_error& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
