// wmsteal: corpus generation, seal forging, attacks, detection and evaluation
// on the toy language model.

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include <wmsteal/io.hpp>

namespace fs = std::filesystem;
using namespace wmsteal;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool force = false;
    unsigned jobs = 1;
    std::string out = "out";
};

ExperimentConfig load_config(const Options& o) {
    json j = json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cannot open config " + o.config);
        try {
            j = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(o.config + ": " + e.what());
        }
    }
    ExperimentConfig c = config_from_json(j);
    if (o.seed) c.seeds = Seeds::derive(*o.seed);
    return c;
}

fs::path corpus_dir(const Options& o) { return fs::path(o.out) / "corpus"; }
fs::path seal_dir(const Options& o) { return fs::path(o.out) / "seals"; }

void refuse_overwrite(const fs::path& p, const Options& o) {
    if (fs::exists(p) && !o.force) throw ConfigError(p.string() + " exists; pass --force to overwrite");
}

/// A Lab primed with the on-disk corpora (and seals when `with_seals`).
Lab primed_lab(const ExperimentConfig& cfg, const Options& o, bool with_seals) {
    Lab lab(cfg, o.jobs);
    const std::string prov = hex64(corpus_provenance(cfg));
    lab.set_dn(io::load_corpus(corpus_dir(o), "dn", prov));
    lab.set_dw(cfg.victim, io::load_corpus(corpus_dir(o), "dw", prov));
    if (with_seals) lab.set_arsenal(cfg.victim, cfg.corpus.num_texts, io::load_arsenal(seal_dir(o), cfg));
    return lab;
}

int cmd_print_defaults() {
    std::cout << to_json(ExperimentConfig{}).dump(2) << "\n";
    return 0;
}

int cmd_gen_corpus(const Options& o) {
    const ExperimentConfig cfg = load_config(o);
    const fs::path dir = corpus_dir(o);
    refuse_overwrite(dir / "dw.manifest.json", o);
    refuse_overwrite(dir / "dn.manifest.json", o);
    Lab lab(cfg, o.jobs);
    const auto mw = io::save_corpus(dir, "dw", lab.dw(cfg.victim), cfg);
    const auto mn = io::save_corpus(dir, "dn", lab.dn(), cfg);
    io::write_json(fs::path(o.out) / "config.json", to_json(cfg));
    std::printf("D_w: %zu texts -> %s\nD_n: %zu texts -> %s\n", mw.num_texts, (dir / mw.file).c_str(), mn.num_texts,
                (dir / mn.file).c_str());
    return 0;
}

int cmd_forge(const Options& o) {
    const ExperimentConfig cfg = load_config(o);
    const fs::path dir = seal_dir(o);
    refuse_overwrite(dir / "manifest.json", o);
    Lab lab = primed_lab(cfg, o, false);
    if (lab.dw(cfg.victim).texts.empty()) throw InputError("D_w is empty");
    const Arsenal& a = lab.arsenal(cfg.victim, cfg.corpus.num_texts);
    const json m = io::save_arsenal(dir, a, cfg);
    for (const auto& f : m["files"])
        std::printf("%-18s %8zu keys\n", f["file"].get<std::string>().c_str(), f["keys"].get<std::size_t>());
    return 0;
}

int cmd_attack(const Options& o) {
    const ExperimentConfig cfg = load_config(o);
    const fs::path dir = fs::path(o.out) / "attack";
    refuse_overwrite(dir / "manifest.json", o);
    Lab lab = primed_lab(cfg, o, cfg.attack.method != Method::None);
    const RunPoint p = base_point(cfg);
    const PointResult r = lab.run_point(p, true, true);
    io::save_texts(dir / "prompts.txt", lab.attack_prompts());
    io::save_texts(dir / "texts.txt", r.texts);
    io::write_atomic(dir / "traces.jsonl", io::format_traces(r.traces));
    json m = io::report_to_json(r, cfg.eval.record_runtime);
    m["texts"] = "texts.txt";
    m["prompts"] = "prompts.txt";
    m["traces"] = "traces.jsonl";
    io::write_json(dir / "manifest.json", m);
    std::printf("%s %s: %zu texts, WCS %.4f AUC %.4f TPR@%g %.4f PPL %.2f\n", std::string(to_string(p.mode)).c_str(),
                p.method.label().c_str(), r.texts.size(), r.report.mean_wcs, r.report.auc, cfg.eval.fpr, r.report.tpr,
                r.report.mean_ppl);
    return 0;
}

int cmd_detect(const Options& o, const std::string& input, const std::string& prompts_file,
               const std::string& victim_override, const std::string& output) {
    ExperimentConfig cfg = load_config(o);
    if (!victim_override.empty()) {
        json v;
        try {
            v = json::parse(victim_override);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("--victim: ") + e.what());
        }
        apply_json(v, cfg.victim, "--victim");
        cfg.validate();
    }
    const auto texts = io::load_texts(input);
    std::vector<TokenSeq> prompts(texts.size());
    if (!prompts_file.empty()) {
        prompts = io::load_texts(prompts_file);
        if (prompts.size() != texts.size()) throw InputError("prompt and text files differ in line count");
    }
    const ToyLM lm(cfg.lm.spec(cfg.seeds.victim_lm));
    const Watermark wm(cfg.victim.params, cfg.victim.key, cfg.lm.vocab_size);
    std::vector<double> wcs(texts.size());
    parallel_for(texts.size(), o.jobs, [&](std::size_t i) {
        check_tokens(texts[i], cfg.lm.vocab_size);
        check_tokens(prompts[i], cfg.lm.vocab_size);
        wcs[i] = wm.detect(texts[i], prompts[i], &lm);
    });
    std::string csv = "index,wcs\n";
    for (std::size_t i = 0; i < wcs.size(); ++i) csv += std::to_string(i) + "," + fmt_real(wcs[i]) + "\n";
    if (output.empty()) std::fputs(csv.c_str(), stdout);
    else io::write_atomic(output, csv);
    std::fprintf(stderr, "%zu texts under %s, mean WCS %.4f\n", wcs.size(), watermark_label(cfg.victim).c_str(),
                 wcs.empty() ? 0.0 : mean(wcs));
    return 0;
}

int cmd_eval(const Options& o) {
    const ExperimentConfig cfg = load_config(o);
    const fs::path dir = fs::path(o.out) / "results";
    refuse_overwrite(dir / "results.csv", o);
    Lab lab = primed_lab(cfg, o, true);
    const auto points = sweep_points(cfg);
    std::string csv = std::string(kCsvHeader) + "\n";
    json rows = json::array();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const PointResult r = lab.run_point(points[i]);
        csv += csv_row(r, cfg.eval.record_runtime) + "\n";
        rows.push_back(io::report_to_json(r, cfg.eval.record_runtime));
        std::fprintf(stderr, "[%zu/%zu] %s\n", i + 1, points.size(), csv_row(r, cfg.eval.record_runtime).c_str());
    }
    io::write_atomic(dir / "results.csv", csv);
    io::write_json(dir / "results.json", {{"config", to_json(cfg)}, {"config_hash", hex64(config_hash(cfg))}, {"points", rows}});
    std::printf("%zu points -> %s\n", points.size(), (dir / "results.csv").c_str());
    return 0;
}

// ---------------------------------------------------------------- report

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw InputError("results CSV lacks column " + name);
    }
};

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
    return out;
}

CsvTable read_csv(const fs::path& p) {
    std::stringstream ss(io::read_file(p));
    CsvTable t;
    std::string line;
    if (!std::getline(ss, line)) throw InputError(p.string() + " is empty");
    t.header = split_csv(line);
    while (std::getline(ss, line)) {
        if (line.empty()) continue;
        auto row = split_csv(line);
        if (row.size() != t.header.size()) throw InputError(p.string() + ": ragged row");
        t.rows.push_back(std::move(row));
    }
    return t;
}

int cmd_report(const Options& o) {
    const fs::path dir = fs::path(o.out) / "results";
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw MissingArtifact("no results CSVs in " + dir.string());

    CsvTable all;
    for (const auto& f : files) {
        CsvTable t = read_csv(f);
        if (all.header.empty()) all.header = t.header;
        else if (t.header != all.header) throw InputError(f.string() + ": header differs from other results");
        for (auto& r : t.rows) all.rows.push_back(std::move(r));
    }
    if (all.rows.empty()) throw MissingArtifact("results CSVs in " + dir.string() + " hold no rows");
    const std::size_t hash = all.col("config_hash");
    for (const auto& r : all.rows)
        if (r[hash] != all.rows.front()[hash])
            throw ProvenanceError("results mix config hashes " + all.rows.front()[hash] + " and " + r[hash]);

    const std::size_t mode = all.col("mode"), method = all.col("method"), abl = all.col("ablation"),
                      wm = all.col("watermark"), delta = all.col("delta_att"), dw = all.col("dw_size"),
                      wcs = all.col("WCS"), auc = all.col("AUC"), tpr = all.col("TPR@1%"), ppl = all.col("PPL");
    const fs::path rep = fs::path(o.out) / "report";

    // Table-shaped summary: one row per (mode, method, ablation), one column
    // group per watermark.
    std::vector<std::string> watermarks;
    std::map<std::string, std::map<std::string, std::vector<std::string>>> cells;
    std::vector<std::string> row_order;
    for (const auto& r : all.rows) {
        if (std::find(watermarks.begin(), watermarks.end(), r[wm]) == watermarks.end()) watermarks.push_back(r[wm]);
        const std::string key = r[mode] + "," + r[method] + "," + r[abl] + "," + r[delta] + "," + r[dw];
        if (!cells.count(key)) row_order.push_back(key);
        cells[key][r[wm]] = {r[wcs], r[auc], r[tpr]};
    }
    std::string summary = "mode,method,ablation,delta_att,dw_size";
    for (const auto& w : watermarks) summary += "," + w + " WCS," + w + " AUC," + w + " TPR@1%";
    summary += "\n";
    for (const auto& key : row_order) {
        summary += key;
        for (const auto& w : watermarks) {
            auto it = cells[key].find(w);
            summary += it == cells[key].end() ? ",-,-,-" : "," + it->second[0] + "," + it->second[1] + "," + it->second[2];
        }
        summary += "\n";
    }
    io::write_atomic(rep / "summary.csv", summary);

    // Plot-ready series along delta_att and |D_w|.
    auto series = [&](std::size_t axis, const char* name) {
        std::string s = std::string("mode,method,ablation,watermark,") + name + ",WCS,AUC,PPL\n";
        for (const auto& r : all.rows)
            s += r[mode] + "," + r[method] + "," + r[abl] + "," + r[wm] + "," + r[axis] + "," + r[wcs] + "," + r[auc] +
                 "," + r[ppl] + "\n";
        return s;
    };
    io::write_atomic(rep / "series_delta_att.csv", series(delta, "delta_att"));
    io::write_atomic(rep / "series_dw_size.csv", series(dw, "dw_size"));
    std::fputs(summary.c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Watermark stealing toolkit on a toy language model"};
    app.require_subcommand(1);
    Options o;
    std::uint64_t seed = 0;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "experiment config (JSON)");
        sub->add_option("--seed", seed, "master seed; re-derives every seed in the config");
        sub->add_flag("--force", o.force, "overwrite existing outputs");
        sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::Range(1U, 1024U));
        sub->add_option("--out", o.out, "output directory")->capture_default_str();
    };
    auto* defaults = app.add_subcommand("print-defaults", "print the default config");
    auto* gen = app.add_subcommand("gen-corpus", "generate D_w and D_n");
    auto* forge = app.add_subcommand("forge", "forge seals and the WC table from the corpora");
    auto* attack = app.add_subcommand("attack", "run the configured attack and write texts and traces");
    auto* detect = app.add_subcommand("detect", "score a token file under the victim detector");
    auto* eval = app.add_subcommand("eval", "evaluate the sweep grid into results/results.csv");
    auto* report = app.add_subcommand("report", "summarize results CSVs");
    for (auto* s : {gen, forge, attack, detect, eval, report}) common(s);
    std::string input, prompts, victim, output;
    detect->add_option("--input", input, "token file, one text per line")->required();
    detect->add_option("--prompts", prompts, "token file of prompts, one per text");
    detect->add_option("--victim", victim, "JSON overrides for victim_watermark");
    detect->add_option("--output", output, "write the scores CSV here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    for (auto* s : {gen, forge, attack, detect, eval, report})
        if (s->parsed() && s->count("--seed")) o.seed = seed;

    try {
        if (defaults->parsed()) return cmd_print_defaults();
        if (gen->parsed()) return cmd_gen_corpus(o);
        if (forge->parsed()) return cmd_forge(o);
        if (attack->parsed()) return cmd_attack(o);
        if (detect->parsed()) return cmd_detect(o, input, prompts, victim, output);
        if (eval->parsed()) return cmd_eval(o);
        if (report->parsed()) return cmd_report(o);
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ProvenanceError& e) {
        std::fprintf(stderr, "provenance error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
