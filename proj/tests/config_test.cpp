// Copyright (C) 2026 pos-diffusion contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "oracles.hpp"
#include "pos/config.hpp"

using namespace pos;

TEST_CASE("defaults") {
    const GenerationConfig c;
    CHECK(c.steps == 50);
    CHECK(c.eta == 0.5);
    CHECK(c.gamma == 0.1);
    CHECK(c.arm == Arm::pos);
    CHECK_NOTHROW(c.validate());
    CHECK(c.hash().size() == 16);
}

TEST_CASE("parse key value text") {
    const auto m = parse_config_text("# comment\n\n  eta = 0.25 \nsteps=20\r\n   # indented comment\narm=ona\n");
    CHECK(m.size() == 3);
    CHECK(m.at("eta") == "0.25");
    CHECK(m.at("steps") == "20");
    CHECK_THROWS_AS(parse_config_text("eta=1\neta=2\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("=3\n"), ConfigError);
}

TEST_CASE("hash ignores formatting, order, comments and execution settings") {
    const auto a = GenerationConfig::from_map(parse_config_text("eta=0.5\ngamma=0.2\nsteps=30\narm=ona\n"));
    const auto b = GenerationConfig::from_map(
        parse_config_text("# same run\narm = ona\n\n   steps =30\ngamma=  0.20\neta=5e-1\nworkers=8\nout=/tmp/x\n"));
    CHECK(a.canonical() == b.canonical());
    CHECK(a.hash() == b.hash());
    const auto c = GenerationConfig::from_map(parse_config_text("eta=0.5\ngamma=0.2\nsteps=31\narm=ona\n"));
    CHECK(a.hash() != c.hash());
    const auto d = GenerationConfig::from_map(parse_config_text("beta=strided:1000:8.5e-4:1.2e-2\n"));
    CHECK(d.hash() == GenerationConfig{}.hash());
}

TEST_CASE("canonical form round trips") {
    GenerationConfig c;
    c.eta_infinite = true;
    c.seed = 77;
    c.arm = Arm::pos_star;
    c.llm_mock = "prefix";
    c.beta = LinearBeta{1e-4, 0.02};
    const auto back = GenerationConfig::from_map(parse_config_text(c.canonical()));
    CHECK(back.canonical() == c.canonical());
    CHECK(back.eta_infinite);
    CHECK(c.canonical().find("eta=inf\n") != std::string::npos);
    CHECK(c.canonical().find("workers") == std::string::npos);
}

TEST_CASE("layering: flag over file over default") {
    const ConfigMap file{{"eta", "0.2"}, {"gamma", "0.3"}};
    const ConfigMap flags{{"eta", "0.9"}};
    const auto c = layered_config(file, flags);
    CHECK(c.eta == 0.9);
    CHECK(c.gamma == 0.3);
    CHECK(c.steps == 50);
}

TEST_CASE("configuration errors") {
    auto bad = [](ConfigMap m) { CHECK_THROWS_AS(GenerationConfig::from_map(m), ConfigError); };
    bad({{"color", "red"}});
    bad({{"eta", "-1"}});
    bad({{"eta", "abc"}});
    bad({{"eta", "nan"}});
    bad({{"gamma", "1.5"}});
    bad({{"steps", "0"}});
    bad({{"steps", "-3"}});
    bad({{"arm", "turbo"}});
    bad({{"beta", "cosine"}});
    bad({{"llm_fallback", "maybe"}});
    bad({{"llm_mock", "echo"}});
    bad({{"llm_mock", "fixture"}});
    bad({{"llm_mock", "prefix"}, {"llm_endpoint", "http://localhost:1/x"}});
    bad({{"workers", "0"}});
    CHECK_NOTHROW(GenerationConfig::from_map({{"eta", "inf"}}));
}

TEST_CASE("arm helpers") {
    for (Arm a : {Arm::baseline, Arm::ona, Arm::spr, Arm::pos, Arm::pos_star}) CHECK(parse_arm(arm_name(a)) == a);
    CHECK_FALSE(arm_uses_guided_noise(Arm::baseline));
    CHECK_FALSE(arm_uses_rewrite(Arm::ona));
    CHECK(arm_uses_guided_noise(Arm::pos_star));
    CHECK(arm_uses_rewrite(Arm::spr));
}

TEST_CASE("config file reading") {
    testing_support::TempDir dir("cfg");
    {
        std::ofstream out(dir.path() / "run.cfg");
        out << "steps = 12\n";
    }
    CHECK(read_config_file(dir.path() / "run.cfg").at("steps") == "12");
    CHECK_THROWS_AS(read_config_file(dir.path() / "nope.cfg"), MissingArtifact);
}
