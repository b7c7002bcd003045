#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/forest/forest.hpp"
#include "lungpipe/pipeline/phantom.hpp"
#include "lungpipe/recur/recurnet.hpp"
#include "lungpipe/seg/segnet.hpp"

// Run configuration: a flat `key = value` text file with section-prefixed
// keys (data., hu., split., seg., recur., forest., phantom.) and `#`
// comments. Command-line flags override their config keys. Defaults are
// desk-scale: small enough that the whole pipeline trains on a CPU.

namespace lp::pipeline {

struct PipelineConfig {
    std::string data_root;  // data.root
    std::string out_dir;    // data.out
    uint64_t seed = 0;

    double hu_low = -1000.0;  // hu.low
    double hu_high = 400.0;   // hu.high

    std::array<double, 3> split = {0.6, 0.2, 0.2};  // split.train/.val/.test

    seg::SegNetConfig seg;        // seg.*
    recur::RecurNetConfig recur;  // recur.*
    bool seg_augment = true;      // seg.augment
    bool recur_augment = true;    // recur.augment

    std::vector<int64_t> forest_estimators = {100, 200, 500};  // forest.estimators
    std::vector<int64_t> forest_depths = {3, 5, 8, 0};         // forest.depths
    int64_t forest_folds = 5;                                  // forest.folds

    PhantomSpec phantom;        // phantom.*
    int64_t phantom_patients = 120;  // phantom.patients

    PipelineConfig();

    // Applies one key = value pair; unknown keys are an error.
    void set(const std::string& key, const std::string& value);

    // Range/consistency checks plus the derived-seed fanout. Path existence
    // is checked by each command, since requirements differ per verb.
    void finalize();

    std::vector<forest::ForestParams> forest_grid() const;
};

// Parses the file and applies every pair onto cfg in order.
void load_config_file(PipelineConfig& cfg, const std::string& path);

// Canonical key = value dump of every setting, used in run manifests.
void write_config_echo(std::ostream& os, const PipelineConfig& cfg);

}  // namespace lp::pipeline
