#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/errors.hpp"
#include "fedsim/federation.hpp"
#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

inline constexpr const char* kCsvHeader = "run_label,round,test_accuracy,train_loss,wall_seconds";
inline constexpr const char* kDataRootEnv = "FEDSIM_DATA_DIR";

inline ModelSpec build_model(const ModelConfig& model, const Dataset<float>& train) {
    if (model.type == ModelConfig::Type::paper_cnn) return paper_cnn();
    auto shape = train.sample_shape();
    if (shape.size() != 1)
        throw ConfigError("model.type mlp needs flat samples; dataset provides rank-" +
                          std::to_string(shape.size()) + " samples");
    return mlp(shape[0], model.hidden, train.num_classes);
}

// Train and test splits for the configured source. Synthetic test data uses
// a derived seed, so it shares class means with the train split but not
// noise.
inline std::pair<Dataset<float>, Dataset<float>> load_datasets(const DatasetConfig& ds) {
    if (ds.type == DatasetConfig::Type::synthetic) {
        Dataset<float> train = make_synthetic<float>(ds.classes, ds.per_class, ds.dim,
                                                     ds.separation, ds.seed);
        std::uint64_t test_seed = detail::mix64(ds.seed, stream::kTestData);
        Dataset<float> test = make_synthetic<float>(ds.classes, ds.test_per_class, ds.dim,
                                                    ds.separation, test_seed);
        return {std::move(train), std::move(test)};
    }
    std::string root = ds.path;
    if (root.empty()) {
        const char* env = std::getenv(kDataRootEnv);
        if (!env || !*env)
            throw ConfigError(std::string("dataset.path not set and ") + kDataRootEnv +
                              " is not in the environment");
        root = env;
    }
    return {load_cifar10(root, Split::train), load_cifar10(root, Split::test)};
}

struct RunSummary {
    std::string label;
    double final_accuracy = 0.0;
    double best_accuracy = 0.0;
    std::optional<std::size_t> rounds_to_threshold;
};

inline void print_summary_table(std::ostream& out, const std::vector<RunSummary>& rows,
                                double threshold) {
    std::size_t width = 9;
    for (const auto& r : rows) width = std::max(width, r.label.size());
    out << std::left << std::setw(static_cast<int>(width)) << "run_label"
        << "  final_acc  best_acc  rounds_to_" << threshold << "\n";
    for (const auto& r : rows) {
        char final_buf[32], best_buf[32];
        std::snprintf(final_buf, sizeof(final_buf), "%9.4f", r.final_accuracy);
        std::snprintf(best_buf, sizeof(best_buf), "%8.4f", r.best_accuracy);
        out << std::left << std::setw(static_cast<int>(width)) << r.label << "  "
            << final_buf << "  " << best_buf << "  ";
        if (r.rounds_to_threshold)
            out << *r.rounds_to_threshold;
        else
            out << "never";
        out << "\n";
    }
}

// Executes every scheduled run and appends all rows to one CSV. Rows are
// written per run, formatted with fixed precision, so two invocations with
// the same config produce byte-identical bodies apart from wall_seconds.
inline std::vector<RunSummary> run_experiment(const ExperimentConfig& cfg, unsigned threads,
                                              std::ostream& log, double threshold = 0.5) {
    auto [train, test] = load_datasets(cfg.dataset);
    ModelSpec spec = build_model(cfg.model, train);

    std::ofstream csv(cfg.output_path, std::ios::trunc);
    if (!csv) throw DataError("cannot open output file " + cfg.output_path);
    csv << kCsvHeader << "\n";

    std::vector<RunSummary> summaries;
    for (const NamedRun& run : cfg.runs()) {
        log << "run " << run.label << ": K=" << run.hp.clients
            << " m=" << run.hp.knowledgeable << " lambda=" << run.hp.resolved_lambda()
            << " T=" << run.hp.rounds << "\n";
        FederatedResult<float> result = run_federated(spec, train, test, run.hp, threads);

        RunSummary summary;
        summary.label = run.label;
        for (const RoundMetrics& row : result.metrics) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s,%zu,%.6f,%.6f,%.3f", run.label.c_str(),
                          row.round, row.test_accuracy, row.train_loss, row.wall_seconds);
            csv << buf << "\n";
            summary.final_accuracy = row.test_accuracy;
            summary.best_accuracy = std::max(summary.best_accuracy, row.test_accuracy);
            if (row.test_accuracy >= threshold && !summary.rounds_to_threshold)
                summary.rounds_to_threshold = row.round;
        }
        csv.flush();
        summaries.push_back(summary);
        log << "  final accuracy " << summaries.back().final_accuracy << "\n";
    }
    return summaries;
}

// Per-run final/best accuracy and first round reaching `threshold`, ordered
// by run label. Complains with a line number on any malformed row.
inline std::vector<RunSummary> summarize_file(const std::string& path, double threshold) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open results file " + path);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader)
        throw DataError(path + ":1: expected header '" + std::string(kCsvHeader) + "'");

    struct Acc {
        std::size_t last_round = 0;
        double final_accuracy = 0.0;
        double best_accuracy = 0.0;
        std::optional<std::size_t> rounds_to_threshold;
    };
    std::map<std::string, Acc> by_label;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string at = path + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::string cur;
        std::stringstream ss(line);
        while (std::getline(ss, cur, ',')) fields.push_back(cur);
        if (fields.size() != 5)
            throw DataError(at + ": expected 5 comma-separated fields, got " +
                            std::to_string(fields.size()));
        std::size_t round;
        double acc;
        try {
            round = detail::parse_size(fields[1], at);
            acc = detail::parse_double(fields[2], at);
            detail::parse_double(fields[3], at);  // train_loss, validated only
            detail::parse_double(fields[4], at);  // wall_seconds, validated only
        } catch (const ConfigError& e) {
            throw DataError(e.what());
        }
        Acc& a = by_label[fields[0]];
        a.best_accuracy = std::max(a.best_accuracy, acc);
        if (round >= a.last_round) {
            a.last_round = round;
            a.final_accuracy = acc;
        }
        if (acc >= threshold &&
            (!a.rounds_to_threshold || round < *a.rounds_to_threshold))
            a.rounds_to_threshold = round;
    }

    std::vector<RunSummary> out;
    for (const auto& [label, a] : by_label)
        out.push_back({label, a.final_accuracy, a.best_accuracy, a.rounds_to_threshold});
    return out;
}

}  // namespace fedsim
