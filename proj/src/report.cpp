#include "snprobe/report.hpp"

#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace snprobe {

namespace {

using nlohmann::json;

std::string num(const json& v) {
    if (v.is_null()) return "";
    if (v.is_number_integer() || v.is_number_unsigned()) return std::to_string(v.get<long long>());
    if (v.is_number()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", v.get<double>());
        return buf;
    }
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.get<std::string>();
}

struct CsvWriter {
    std::ostringstream text;

    void row(std::initializer_list<std::string> cells) {
        bool first = true;
        for (const auto& c : cells) {
            if (!first) text << ',';
            text << c;
            first = false;
        }
        text << '\n';
    }
};

void write_text(const std::filesystem::path& path, const std::string& text,
                std::vector<std::filesystem::path>& written) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
    written.push_back(path);
}

bool is_run_document(const json& j) {
    return j.is_object() && j.contains("kind") && j["kind"].is_string() && j.contains("run") &&
           j["run"].is_object();
}

json method_row(const json& row, const std::string& source) {
    json r = {{"method", row.value("method", std::string("?"))},
              {"source", source},
              {"accuracy", row.at("accuracy")},
              {"precision", row.at("precision")},
              {"recall", row.at("recall")},
              {"f1", row.at("f1")},
              {"n", row.at("n")}};
    for (const char* extra : {"k", "exit_layer", "modeled_speedup"})
        if (row.contains(extra)) r[extra] = row[extra];
    return r;
}

} // namespace

std::string summary_table(const json& rows) {
    std::ostringstream md;
    md << "| Method | Source | Accuracy | Precision | Recall | F1 | AR | Exit layer | Speedup |\n"
       << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        md << "| " << num(r.at("method")) << " | " << num(r.at("source")) << " | "
           << num(r.at("accuracy")) << " | " << num(r.at("precision")) << " | " << num(r.at("recall"))
           << " | " << num(r.at("f1")) << " | " << (r.contains("ar") ? num(r["ar"]) : "") << " | "
           << (r.contains("exit_layer") ? num(r["exit_layer"]) : "") << " | "
           << (r.contains("modeled_speedup") ? num(r["modeled_speedup"]) + "x" : "") << " |\n";
    }
    return md.str();
}

ReportBundle build_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(run_dir)) throw IoError("run directory not found: " + run_dir.string());

    std::vector<fs::path> candidates;
    const auto out_abs = fs::weakly_canonical(out_dir);
    for (const auto& entry : fs::directory_iterator(run_dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
        if (fs::weakly_canonical(entry.path().parent_path()) == out_abs) continue;
        candidates.push_back(entry.path());
    }
    std::sort(candidates.begin(), candidates.end());

    fs::create_directories(out_dir);
    ReportBundle bundle;
    json runs = json::array();
    json method_rows = json::array();
    std::map<std::string, json> model_rows; // keyed by manifest digest, deduplicated

    for (const auto& path : candidates) {
        json doc;
        try {
            doc = read_json_file(path);
        } catch (const FormatError&) {
            continue; // not ours
        }
        if (!is_run_document(doc)) continue;
        const std::string kind = doc["kind"].get<std::string>();
        const std::string stem = path.stem().string();
        json entry = {{"file", path.filename().string()}, {"kind", kind}, {"run", doc["run"]}, {"series", json::array()}};

        const auto manifest_key = [&]() -> std::string {
            const auto& in = doc["run"]["inputs"];
            for (const char* role : {"manifest", "eval_manifest"})
                if (in.contains(role)) return in[role].at("sha256").get<std::string>();
            return stem;
        };

        if (kind == "tau_sweep") {
            CsvWriter csv;
            csv.row({"tau", "best_accuracy", "layer", "dim", "layer_label"});
            for (const auto& p : doc.at("points")) {
                const auto layer = p.at("best_neuron").at(0).get<std::uint32_t>();
                csv.row({num(p.at("tau")), num(p.at("best_accuracy")), std::to_string(layer),
                         num(p.at("best_neuron").at(1)), std::to_string(layer + 1)});
            }
            const auto file = out_dir / (stem + ".tau_sweep.csv");
            write_text(file, csv.text.str(), bundle.files);
            entry["series"].push_back(file.filename().string());
            entry["argmax_tau"] = doc.at("argmax_tau");
        } else if (kind == "agreement_curve") {
            CsvWriter csv;
            const bool agg = !doc.at("points").empty() && doc["points"][0].contains("ar_aggregated");
            if (agg) csv.row({"lambda", "ar", "k", "ar_aggregated"});
            else csv.row({"lambda", "ar", "k"});
            for (const auto& p : doc.at("points")) {
                if (agg) csv.row({num(p.at("lambda")), num(p.at("ar")), num(p.at("k")), num(p.at("ar_aggregated"))});
                else csv.row({num(p.at("lambda")), num(p.at("ar")), num(p.at("k"))});
            }
            const auto file = out_dir / (stem + ".ar_curve.csv");
            write_text(file, csv.text.str(), bundle.files);
            entry["series"].push_back(file.filename().string());
        } else if (kind == "super_neuron_set") {
            const std::uint32_t num_layers = doc.at("shape").at(0).get<std::uint32_t>();
            std::vector<std::uint32_t> counts(num_layers, 0);
            if (doc.contains("per_layer_counts")) {
                counts = doc["per_layer_counts"].get<std::vector<std::uint32_t>>();
            } else {
                for (const auto& n : doc.at("neurons")) ++counts.at(n.at(0).get<std::uint32_t>());
            }
            CsvWriter csv;
            csv.row({"layer", "layer_label", "count"});
            for (std::uint32_t l = 0; l < counts.size(); ++l)
                csv.row({std::to_string(l), std::to_string(l + 1), std::to_string(counts[l])});
            const auto file = out_dir / (stem + ".layer_counts.csv");
            write_text(file, csv.text.str(), bundle.files);
            entry["series"].push_back(file.filename().string());
            entry["k"] = doc.at("neurons").size();
            entry["lambda"] = doc.at("config").at("lambda");

            if (doc.contains("lambda_sweep")) {
                CsvWriter sw;
                sw.row({"lambda", "k", "min_layer", "exit_layer"});
                for (const auto& p : doc["lambda_sweep"].at("points"))
                    sw.row({num(p.at("lambda")), num(p.at("k")), num(p.at("min_layer")), num(p.at("exit_layer"))});
                const auto sweep_file = out_dir / (stem + ".lambda_sweep.csv");
                write_text(sweep_file, sw.text.str(), bundle.files);
                entry["series"].push_back(sweep_file.filename().string());
            }
            if (doc.contains("model_metrics")) {
                auto row = doc["model_metrics"];
                row["method"] = "model";
                model_rows.emplace(manifest_key(), method_row(row, stem));
            }
        } else if (kind == "eval" || kind == "transfer") {
            for (const auto& row : doc.at("rows")) {
                if (row.value("method", std::string()) == "model") {
                    model_rows.emplace(manifest_key(), method_row(row, stem));
                    continue;
                }
                auto r = method_row(row, stem);
                if (doc.contains("agreement_rate")) r["ar"] = doc["agreement_rate"];
                method_rows.push_back(std::move(r));
            }
        } else if (kind != "predictions" && kind != "overlap" && kind != "dump_stats" && kind != "synth") {
            continue; // unknown kinds are not counted as sources
        }
        runs.push_back(std::move(entry));
        ++bundle.sources;
    }
    if (bundle.sources == 0)
        throw DataError("no run documents found in " + run_dir.string());

    json reference = json::array();
    for (auto& [key, row] : model_rows) reference.push_back(row);

    std::ostringstream md;
    md << "# Summary\n\n";
    if (!method_rows.empty()) md << summary_table(method_rows) << "\n";
    else md << "No evaluation runs.\n\n";
    if (!reference.empty()) md << "## Reference model\n\n" << summary_table(reference);
    write_text(out_dir / "summary.md", md.str(), bundle.files);

    bundle.report = {{"kind", "report_bundle"},
                     {"run_dir", run_dir.string()},
                     {"runs", std::move(runs)},
                     {"summary_rows", std::move(method_rows)},
                     {"model_rows", std::move(reference)}};
    const auto report_path = out_dir / "report.json";
    write_json_file(report_path, bundle.report);
    bundle.files.push_back(report_path);
    std::sort(bundle.files.begin(), bundle.files.end());
    return bundle;
}

} // namespace snprobe
