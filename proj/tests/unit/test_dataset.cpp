#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "pgmoe/dataset.hpp"
#include "pgmoe/errors.hpp"
#include "../support.hpp"

using namespace pgmoe;

namespace {

DatasetConfig small_config() {
    DatasetConfig c;
    c.n_spins = 6;
    return c;
}

const DatasetBundle& small_bundle() {
    static const DatasetBundle b = generate_bundle(small_config());
    return b;
}

std::set<std::pair<double, double>> keys(std::span<const LabeledExample> xs) {
    std::set<std::pair<double, double>> out;
    for (const auto& x : xs) out.insert({x.b_x, x.b_z});
    return out;
}

}  // namespace

TEST_CASE("grids") {
    const auto train = make_grid(default_training_grid());
    CHECK(train.size() == 300);
    std::set<double> bx;
    for (const auto& p : train) bx.insert(p.b_x);
    CHECK(bx.size() == 10);
    CHECK(*bx.begin() == 0.0);
    CHECK(*bx.rbegin() == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(train.front().b_z == 0.06);
    CHECK(train[29].b_z == 2.0);
    CHECK(train[1].b_x == 0.0);  // row-major by B_x

    const auto unseen = make_grid(default_unseen_grid());
    CHECK(unseen.size() == 300);
    CHECK(unseen.front().b_x == 1.05);
    CHECK(unseen.back().b_x == 2.0);
    CHECK(unseen.back().b_z == 2.0);

    GridSpec one;
    one.bx_steps = one.bz_steps = 1;
    CHECK(make_grid(one).size() == 1);
    GridSpec bad;
    bad.bx_steps = 0;
    CHECK_THROWS_AS(make_grid(bad), std::invalid_argument);
}

TEST_CASE("labels") {
    const std::vector<FieldPoint> pts{{0.0, 0.7}, {0.5, 1.0}};
    const auto labels = solve_labels(pts, 8, 1.0, {});
    REQUIRE(labels.size() == 2);
    CHECK(labels[0].psi.cwiseAbs().maxCoeff() == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& l : labels) verify_label(l, 8, 1.0);
    const auto ref = dense_ground_state(oracle::ising_matrix(8, 1.0, 0.5, 1.0));
    CHECK(std::abs(ref.state.dot(labels[1].psi)) >= 1.0 - 1e-9);
    CHECK(labels[1].e0 == doctest::Approx(ref.energy).epsilon(1e-10));

    const std::vector<FieldPoint> degenerate{{0.0, 0.0}};
    try {
        solve_labels(degenerate, 6, 1.0, {});
        FAIL("expected DegenerateGroundStateError");
    } catch (const DegenerateGroundStateError& e) {
        CHECK(std::string(e.what()).find("B_x=0") != std::string::npos);
    }

    auto broken = labels[1];
    broken.psi = -broken.psi;
    CHECK_THROWS(verify_label(broken, 8, 1.0));
}

TEST_CASE("split counts and disjointness") {
    const auto& b = small_bundle();
    CHECK(b.train_pool.size() == 260);
    CHECK(b.validation.size() == 20);
    CHECK(b.test_seen.size() == 20);
    CHECK(b.test_unseen.size() == 300);
    CHECK(b.unlabeled_extension.size() == 150);
    const auto pool = keys(b.train_pool), val = keys(b.validation), test = keys(b.test_seen);
    CHECK(pool.size() + val.size() + test.size() == 300);
    std::set<std::pair<double, double>> all = pool;
    all.insert(val.begin(), val.end());
    all.insert(test.begin(), test.end());
    CHECK(all.size() == 300);
    // two test and two validation points per B_x bin
    std::map<double, int> per_bin;
    for (const auto& x : b.test_seen) ++per_bin[x.b_x];
    CHECK(per_bin.size() == 10);
    for (const auto& [bx, n] : per_bin) CHECK(n == 2);
    for (const auto& x : b.test_unseen) CHECK(x.b_x > 1.0);
    for (const auto& x : b.train_pool) verify_label(x, 6, 1.0);
}

TEST_CASE("split determinism") {
    const auto& b = small_bundle();
    std::vector<LabeledExample> grid = b.train_pool;
    grid.insert(grid.end(), b.validation.begin(), b.validation.end());
    grid.insert(grid.end(), b.test_seen.begin(), b.test_seen.end());
    const auto s1 = split_dataset(grid, 5);
    const auto s2 = split_dataset(grid, 5);
    CHECK(keys(s1.test_seen) == keys(s2.test_seen));
    bool differs = false;
    for (std::uint64_t seed = 6; seed < 10 && !differs; ++seed) differs = keys(split_dataset(grid, seed).test_seen) != keys(s1.test_seen);
    CHECK(differs);
    CHECK(split_dataset(grid, 77).validation.size() == 20);
    const std::vector<LabeledExample> tiny(grid.begin(), grid.begin() + 3);
    CHECK_THROWS_AS(split_dataset(tiny, 1), std::invalid_argument);
}

TEST_CASE("supervision assignment") {
    const auto& b = small_bundle();
    const std::vector<BxRange> half{{0.0, 0.5}}, rest{{0.5, 1.0}}, all{{0.0, 1.0}}, none{};
    auto s = assign_supervision(b.train_pool, half, rest);
    CHECK(s.labeled.size() == 130);
    CHECK(s.unlabeled.size() == 130);
    CHECK(s.excluded == 0);
    s = assign_supervision(b.train_pool, all, none);
    CHECK(s.labeled.size() == 260);
    CHECK(s.unlabeled.empty());
    const std::vector<BxRange> outer{{0.0, 0.3}, {0.7, 1.0}}, inner{{0.3, 0.7}};
    s = assign_supervision(b.train_pool, outer, inner);
    CHECK(s.labeled.size() == 156);
    CHECK(s.unlabeled.size() == 104);
    s = assign_supervision(b.train_pool, std::vector<BxRange>{{0.0, 0.2}}, std::vector<BxRange>{{0.5, 0.7}});
    CHECK(s.labeled.size() + s.unlabeled.size() + s.excluded == 260);
    CHECK(s.excluded == 156);
    CHECK_THROWS_AS(assign_supervision(b.train_pool, half, std::vector<BxRange>{{0.4, 1.0}}), std::invalid_argument);
}

TEST_CASE("bundle persistence round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "pgmoe_dataset_test";
    std::filesystem::remove_all(dir);
    const auto& b = small_bundle();
    save_bundle(b, dir);
    const auto back = load_bundle(dir);
    CHECK(back.manifest.content_hash == b.manifest.content_hash);
    REQUIRE(back.test_unseen.size() == b.test_unseen.size());
    for (std::size_t i = 0; i < b.test_unseen.size(); ++i) {
        CHECK(back.test_unseen[i].psi == b.test_unseen[i].psi);
        CHECK(back.test_unseen[i].e0 == b.test_unseen[i].e0);
        CHECK(back.test_unseen[i].b_z == b.test_unseen[i].b_z);
    }
    CHECK(back.n_spins() == 6);

    // a second save of the loaded bundle is byte-identical
    const auto dir2 = dir.string() + "_again";
    save_bundle(back, dir2);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    for (const char* f : {"manifest.json", "train_pool.jsonl", "test_unseen.jsonl", "unlabeled_extension.jsonl"}) {
        CHECK(slurp(dir / f) == slurp(std::filesystem::path(dir2) / f));
    }

    // tampering is caught by the content hash
    {
        std::string text = slurp(dir / "validation.jsonl");
        text[text.find("0.") + 2] = text[text.find("0.") + 2] == '1' ? '2' : '1';
        std::ofstream(dir / "validation.jsonl", std::ios::binary | std::ios::trunc) << text;
    }
    CHECK_THROWS(load_bundle(dir));
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST_CASE("JSONL format") {
    LabeledExample x{0.1, 0.2, Eigen::Vector2d(0.6, 0.8), -1.25};
    const auto line = to_jsonl(std::vector<LabeledExample>{x});
    CHECK(line.find("\"bx\"") != std::string::npos);
    CHECK(line.find("\"psi\"") != std::string::npos);
    const auto back = labeled_from_jsonl(line);
    CHECK(back.at(0).b_x == 0.1);
    CHECK(back.at(0).psi == x.psi);
    const auto u = unlabeled_from_jsonl(to_jsonl(std::vector<UnlabeledExample>{{1.2, 0.06}}));
    CHECK(u.at(0).b_x == 1.2);
    CHECK(to_jsonl(std::vector<UnlabeledExample>{{1.2, 0.06}}).find("psi") == std::string::npos);
}
