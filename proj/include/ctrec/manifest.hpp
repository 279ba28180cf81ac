#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ctrec/common.hpp"
#include "ctrec/image.hpp"

namespace ctrec {

enum class Domain { day = 0, night = 1 };
enum class Split { train, test, unassigned };

const char* to_string(Domain d);
const char* to_string(Split s);
Domain domain_from_string(const std::string& s);

// One 3-frame capture burst with its label, domain and split assignment.
struct SequenceSample {
    std::string id;
    std::array<std::string, 3> frames;  // paths relative to the manifest directory
    int class_label = -1;
    Domain domain = Domain::day;
    std::string location;
    Split split = Split::unassigned;
};

// Per-class training counts split by domain: counts[c][0]=day, [1]=night.
using CountTable = std::vector<std::array<int, 2>>;

struct DatasetManifest {
    std::vector<std::string> class_names;
    std::vector<SequenceSample> samples;
    std::string root_dir;  // directory the frame paths are relative to; not serialized

    int num_classes() const { return static_cast<int>(class_names.size()); }
    // Reconstructed from train-split samples, never stored.
    CountTable train_counts() const;
    std::string frame_path(const SequenceSample& s, int frame) const;
};

struct DomainStats {
    struct PerClass {
        bool day_dominant = false;
        bool night_dominant = false;
        double imbalance_ratio = 1.0;  // max/min over domains; inf when one side is empty
    };
    std::vector<PerClass> per_class;

    bool is_dominant(int c, Domain z) const {
        return z == Domain::day ? per_class[c].day_dominant : per_class[c].night_dominant;
    }
};

// Record of what the test-balancing step removed.
struct BalanceReport {
    struct Removal {
        int class_label;
        Domain domain;
        int removed;
    };
    std::vector<Removal> subsampled;
    std::vector<int> classes_dropped_from_test;
};

// ---- dataset-construction pipeline ----

// A frame is "night" when no pixel has any spread between its channels.
Domain detect_domain(const Image8& img, int tolerance);

// First three frames of a burst; bursts shorter than 3 are rejected.
std::optional<std::array<std::string, 3>> select_frames(const std::vector<std::string>& raw);

// Stratified per (class, domain): train gets ceil(fraction * n), rest test.
void split_train_test(DatasetManifest& m, double train_fraction, uint64_t seed);

// Drops classes missing a sample in any (domain x split) cell and re-packs
// class indices densely. Throws ConfigError if nothing survives.
void filter_categories(DatasetManifest& m);

// Per class, subsamples the larger test domain down to the smaller one.
// Classes with an empty test domain are dropped from the test split only.
BalanceReport balance_test_domains(DatasetManifest& m, uint64_t seed);

DomainStats compute_stats(const CountTable& counts);
inline DomainStats compute_stats(const DatasetManifest& m) { return compute_stats(m.train_counts()); }

// ---- JSON serialization (schema documented in the README) ----
void save_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest load_manifest(const std::string& path);

}  // namespace ctrec
