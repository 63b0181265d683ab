//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use debiaser_core::detector::{detect_embedded, detect_orientation, detect_unpleasant, DetectionConfig};
use debiaser_core::eval::metrics::{
    pronoun_proportions, score_reduction, stereotype_score, toxicity_reduction, PronounCategory,
    PronounProportions, StereoLabel,
};
use debiaser_core::geometry::{repair_vector, Embedding};
use debiaser_core::lexicon::{
    load_lexicon, AttributeRecord, EntryRecord, GroupRecord, Lexicon, LexiconFile, Polarity,
};
use debiaser_core::providers::{EchoChat, FixtureEmbedder, RoleInstructions, RuleChat, SyntheticEmbedder};
use debiaser_core::resolver::resolve;
use debiaser_core::rewriter::{DebiasRequest, Pipeline, TaskMode, Templates};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

// Independent arithmetic for the oracles: plain loops, no library helpers.

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(a: &[f64]) -> Vec<f64> {
    let n = dot(a, a).sqrt();
    a.iter().map(|x| x / n).collect()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

fn first_max(scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best
}

fn oracle_repair(v_r: &[f64], w: &[f64]) -> Vec<f64> {
    let v1 = unit(v_r);
    let v2 = unit(w);
    let c = cos(v_r, w);
    let u1: Vec<f64> = v2.iter().zip(&v1).map(|(b, a)| c * b - a).collect();
    let u1 = unit(&u1);
    u1.iter().zip(&v1).map(|(u, a)| u - a).collect()
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if dot(&v, &v) > 1e-6 {
            return v;
        }
    }
}

fn emb(v: &[f64]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}

/// Random single-attribute lexicon. Group `g` owns words `g{g}-minus{i}` and
/// `g{g}-plus{i}`; entry order within a set is index order.
#[derive(Clone)]
struct RandomLexicon {
    groups: Vec<Vec<f64>>,
    minus: Vec<Vec<Vec<f64>>>,
    plus: Vec<Vec<Vec<f64>>>,
}

impl RandomLexicon {
    fn generate(rng: &mut ChaCha8Rng, dim: usize, with_ties: bool) -> Self {
        let n_groups = rng.random_range(2..=5);
        let set = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            let n = rng.random_range(1..=8);
            let mut out: Vec<Vec<f64>> = Vec::with_capacity(n);
            for _ in 0..n {
                if with_ties && !out.is_empty() && rng.random_bool(0.3) {
                    let j = rng.random_range(0..out.len());
                    out.push(out[j].clone());
                } else {
                    out.push(gaussian(rng, dim));
                }
            }
            out
        };
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for _ in 0..n_groups {
            if with_ties && !groups.is_empty() && rng.random_bool(0.3) {
                let j = rng.random_range(0..groups.len());
                groups.push(groups[j].clone());
            } else {
                groups.push(gaussian(rng, dim));
            }
        }
        let minus = (0..n_groups).map(|_| set(rng)).collect();
        let plus = (0..n_groups).map(|_| set(rng)).collect();
        Self { groups, minus, plus }
    }

    fn scaled(&self, rng: &mut ChaCha8Rng) -> Self {
        let mut s = |v: &Vec<f64>| {
            let k = 10f64.powf(rng.random_range(-3.0..3.0));
            v.iter().map(|x| x * k).collect::<Vec<f64>>()
        };
        Self {
            groups: self.groups.iter().map(&mut s).collect(),
            minus: self.minus.iter().map(|set| set.iter().map(&mut s).collect()).collect(),
            plus: self.plus.iter().map(|set| set.iter().map(&mut s).collect()).collect(),
        }
    }

    fn build(&self) -> Lexicon {
        let dim = self.groups[0].len();
        let mut entries = Vec::new();
        for (g, (minus, plus)) in self.minus.iter().zip(&self.plus).enumerate() {
            for (polarity, tag, set) in [(Polarity::Unpleasant, "minus", minus), (Polarity::Pleasant, "plus", plus)] {
                for (i, v) in set.iter().enumerate() {
                    entries.push(EntryRecord {
                        word: format!("g{g}-{tag}{i}"),
                        group_id: format!("g{g}"),
                        polarity: polarity.clone(),
                        vector: Some(v.clone()),
                    });
                }
            }
        }
        let file = LexiconFile {
            embedding_model_id: "random".into(),
            dim,
            template: "This is {}".into(),
            attributes: vec![AttributeRecord {
                name: "attr".into(),
                groups: self
                    .groups
                    .iter()
                    .enumerate()
                    .map(|(g, v)| GroupRecord { id: format!("g{g}"), surface_text: format!("group {g}"), vector: Some(v.clone()) })
                    .collect(),
            }],
            entries,
        };
        Lexicon::from_file(file, None).expect("random lexicon is valid")
    }
}

/// A response near a random group and one of its unpleasant words, so that
/// most cases exercise the full detect-resolve path.
fn biased_response(rng: &mut ChaCha8Rng, lex: &RandomLexicon) -> Vec<f64> {
    let g = rng.random_range(0..lex.groups.len());
    let w = &lex.minus[g][rng.random_range(0..lex.minus[g].len())];
    let noise = gaussian(rng, w.len());
    let (ug, uw) = (unit(&lex.groups[g]), unit(w));
    (0..w.len()).map(|i| ug[i] + uw[i] + 0.3 * noise[i] / (w.len() as f64).sqrt()).collect()
}

fn orthogonality() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut pairs = 0usize;
    let mut worst = 0f64;
    let mut errors = 0usize;
    for dim in [2usize, 8, 64, 768] {
        let mut done = 0;
        while done < 2_600 {
            let scale = |rng: &mut ChaCha8Rng| 10f64.powf(rng.random_range(-3.0..3.0));
            let (sr, sw) = (scale(&mut rng), scale(&mut rng));
            let v_r: Vec<f64> = gaussian(&mut rng, dim).iter().map(|x| x * sr).collect();
            let w: Vec<f64> = gaussian(&mut rng, dim).iter().map(|x| x * sw).collect();
            if cos(&v_r, &w).abs() > 0.99 {
                continue;
            }
            done += 1;
            match repair_vector(&emb(&v_r), &emb(&w), 1e-6) {
                Ok(u) => {
                    let v1 = unit(&v_r);
                    let v2 = unit(&w);
                    let sum: Vec<f64> = u.as_slice().iter().zip(&v1).map(|(a, b)| a + b).collect();
                    worst = worst.max(dot(&sum, &v2).abs());
                }
                Err(_) => errors += 1,
            }
        }
        pairs += done;
    }
    let elapsed = start.elapsed();
    verdict(
        errors == 0 && worst <= 1e-6 && pairs >= 10_000 && elapsed < Duration::from_secs(10),
        format!("{pairs} pairs, max |<u*+v1, v2>| = {worst:.3e}, {errors} errors, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn scale_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = DetectionConfig::with_epsilon(0.0);
    let mut mismatches = Vec::new();
    let mut resolved = 0usize;
    let mut worst = 0f64;
    for case in 0..1_000 {
        let dim = rng.random_range(2..=32);
        let base = RandomLexicon::generate(&mut rng, dim, false);
        let v_r = biased_response(&mut rng, &base);
        let k = 10f64.powf(rng.random_range(-3.0..3.0));
        let v_s: Vec<f64> = v_r.iter().map(|x| x * k).collect();
        let scaled = base.scaled(&mut rng);
        let (la, lb) = (base.build(), scaled.build());
        let ra = detect_embedded("r", emb(&v_r), "attr", &la, &cfg).unwrap();
        let rb = detect_embedded("r", emb(&v_s), "attr", &lb, &cfg).unwrap();
        let oa = ra.orientation.as_ref().map(|o| o.group_id.clone());
        let ob = rb.orientation.as_ref().map(|o| o.group_id.clone());
        let wa = ra.unpleasant.as_ref().map(|u| u.word.clone());
        let wb = rb.unpleasant.as_ref().map(|u| u.word.clone());
        if oa != ob || wa != wb {
            mismatches.push(case);
            continue;
        }
        if !ra.is_biased() {
            continue;
        }
        match (resolve(&ra, &la, &cfg), resolve(&rb, &lb, &cfg)) {
            (Ok(a), Ok(b)) => {
                resolved += 1;
                let diff = a
                    .repair_vector
                    .as_slice()
                    .iter()
                    .zip(b.repair_vector.as_slice())
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(diff);
                if a.pleasant_word != b.pleasant_word || diff > 1e-6 {
                    mismatches.push(case);
                }
            }
            (Err(_), Err(_)) => {}
            _ => mismatches.push(case),
        }
    }
    verdict(
        mismatches.is_empty() && resolved > 0,
        format!(
            "1000 cases, {resolved} resolved, max u* component diff = {worst:.3e}, mismatched cases: {:?}",
            &mismatches[..mismatches.len().min(10)]
        ),
    )
}

fn argmax_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut orient_bad, mut minus_bad, mut plus_bad) = (0, 0, 0);
    let (mut ties, mut resolved) = (0usize, 0usize);
    for _ in 0..1_000 {
        let dim = rng.random_range(2..=16);
        let lex = RandomLexicon::generate(&mut rng, dim, true);
        let built = lex.build();
        let attribute = built.attribute("attr").unwrap();
        let v_r = if rng.random_bool(0.5) { biased_response(&mut rng, &lex) } else { gaussian(&mut rng, dim) };
        let eps = rng.random_range(0.0..0.9);
        let cfg = DetectionConfig::with_epsilon(eps);

        // orientation
        let sims: Vec<f64> = lex.groups.iter().map(|g| cos(&v_r, g)).collect();
        let k = first_max(&sims);
        if sims.iter().filter(|s| **s == sims[k]).count() > 1 {
            ties += 1;
        }
        let expect = (sims[k] >= eps).then(|| format!("g{k}"));
        let got = detect_orientation(&emb(&v_r), attribute, &cfg).unwrap().map(|o| o.group_id);
        if got != expect {
            orient_bad += 1;
        }

        // unpleasant, over a random group
        let g = rng.random_range(0..lex.groups.len());
        let sims: Vec<f64> = lex.minus[g].iter().map(|w| cos(&v_r, w)).collect();
        let j = first_max(&sims);
        if sims.iter().filter(|s| **s == sims[j]).count() > 1 {
            ties += 1;
        }
        let expect = (sims[j] >= eps).then(|| format!("g{g}-minus{j}"));
        let got = detect_unpleasant(&emb(&v_r), &format!("g{g}"), &built, &cfg).unwrap().map(|u| u.word);
        if got != expect {
            minus_bad += 1;
        }

        // pleasant resolution, whenever the full path fires
        let report = detect_embedded("r", emb(&v_r), "attr", &built, &cfg).unwrap();
        if let (Some(o), Some(u)) = (&report.orientation, &report.unpleasant) {
            let g: usize = o.group_id[1..].parse().unwrap();
            let w: usize = u.word.rsplit("minus").next().unwrap().parse().unwrap();
            let c = cos(&v_r, &lex.minus[g][w]).abs();
            if c > 1.0 - 1e-6 {
                continue;
            }
            let u_star = oracle_repair(&v_r, &lex.minus[g][w]);
            let sims: Vec<f64> = lex.plus[g].iter().map(|p| cos(p, &u_star)).collect();
            let p = first_max(&sims);
            if sims.iter().filter(|s| **s == sims[p]).count() > 1 {
                ties += 1;
            }
            resolved += 1;
            match resolve(&report, &built, &cfg) {
                Ok(r) if r.pleasant_word == format!("g{g}-plus{p}") => {}
                _ => plus_bad += 1,
            }
        }
    }
    verdict(
        orient_bad == 0 && minus_bad == 0 && plus_bad == 0 && resolved >= 100 && ties > 0,
        format!(
            "1000 fixtures each; mismatches orientation {orient_bad}, unpleasant {minus_bad}, pleasant {plus_bad} \
             ({resolved} resolutions, {ties} tied maxima)"
        ),
    )
}

#[derive(Deserialize)]
struct StereotypeRow {
    attribute: String,
    model: String,
    before: f64,
    after: f64,
    reduction: f64,
}

fn stereoset_table() -> Verdict {
    let text = std::fs::read_to_string(fixtures().join("reference/stereotype_scores.json")).unwrap();
    let rows: Vec<StereotypeRow> = serde_json::from_str(&text).unwrap();
    let mut off = Vec::new();
    for r in &rows {
        let got = score_reduction(r.before, r.after).unwrap();
        if (got - r.reduction).abs() > 0.01 + 1e-9 {
            off.push(format!(
                "{}/{}: ({:.2}, {:.2}) -> {:.2}, table says {:.2}",
                r.attribute, r.model, r.before, r.after, got, r.reduction
            ));
        }
    }
    verdict(
        rows.len() == 12 && off.is_empty(),
        format!("{}/{} rows within 0.01{}", rows.len() - off.len(), rows.len(), listing(&off)),
    )
}

#[derive(Deserialize)]
struct PronounRow {
    model: String,
    stage: String,
    #[serde(flatten)]
    proportions: PronounProportions,
}

fn winobias_consistency() -> Verdict {
    let text = std::fs::read_to_string(fixtures().join("reference/pronoun_proportions.json")).unwrap();
    let rows: Vec<PronounRow> = serde_json::from_str(&text).unwrap();
    let off: Vec<String> = rows
        .iter()
        .filter(|r| (r.proportions.sum() - 1.0).abs() > 0.011 + 1e-9)
        .map(|r| format!("{} {}: sum {:.3}", r.model, r.stage, r.proportions.sum()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=300);
        let answers: Vec<PronounCategory> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => PronounCategory::Male,
                1 => PronounCategory::Female,
                _ => PronounCategory::Neutral,
            })
            .collect();
        worst = worst.max((pronoun_proportions(&answers).unwrap().sum() - 1.0).abs());
    }
    verdict(
        off.is_empty() && worst <= 1e-9,
        format!(
            "{}/{} table rows sum to 1 +/- 0.011; 500 synthetic lists, max |sum - 1| = {worst:.1e}{}",
            rows.len() - off.len(),
            rows.len(),
            listing(&off)
        ),
    )
}

fn metric_units() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ss = 0f64;
    let mut lists = 0;
    while lists < 500 {
        let n = rng.random_range(1..=100);
        let choices: Vec<StereoLabel> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => StereoLabel::Stereotype,
                1 => StereoLabel::AntiStereotype,
                _ => StereoLabel::Meaningless,
            })
            .collect();
        let Ok(ss) = stereotype_score(&choices) else { continue };
        let swapped: Vec<StereoLabel> = choices.iter().map(|c| c.swapped()).collect();
        worst_ss = worst_ss.max((ss + stereotype_score(&swapped).unwrap() - 100.0).abs());
        lists += 1;
    }
    let mut worst_tox = 0f64;
    for _ in 0..500 {
        let x: f64 = 1.0 - rng.random::<f64>();
        let same = toxicity_reduction(&[x], &[x]).unwrap();
        let full = toxicity_reduction(&[x], &[0.0]).unwrap();
        worst_tox = worst_tox.max(same.abs()).max((full - 100.0).abs());
    }
    verdict(
        worst_ss <= 1e-9 && worst_tox <= 1e-9,
        format!("500 choice lists, max |ss + ss(swap) - 100| = {worst_ss:.1e}; 500 toxicity values, max error {worst_tox:.1e}"),
    )
}

fn eval_run(task: &str, out: &Path, workers: usize, extra: &[&str]) -> Result<(), String> {
    let config = fixtures().join("config.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_debiaser"))
        .arg("--config")
        .arg(&config)
        .arg("--output")
        .arg(out)
        .args(["--workers", &workers.to_string()])
        .args(extra)
        .args(["eval", task])
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{task} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr).trim()))
    }
}

fn hermetic_e2e() -> Verdict {
    let start = Instant::now();
    let mut problems = Vec::new();
    for task in ["stereoset", "winobias", "bold"] {
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        let runs = [(0, 1), (1, 1), (2, 8)];
        let mut ok = true;
        for (d, workers) in runs {
            if let Err(e) = eval_run(task, dirs[d].path(), workers, &[]) {
                problems.push(e);
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        for ext in ["json", "txt"] {
            let read = |d: usize| std::fs::read(dirs[d].path().join(format!("{task}.{ext}"))).unwrap_or_default();
            let (a, b, c) = (read(0), read(1), read(2));
            if a.is_empty() {
                problems.push(format!("{task}.{ext} missing"));
            } else if a != b {
                problems.push(format!("{task}.{ext} differs between runs"));
            } else if a != c {
                problems.push(format!("{task}.{ext} differs between 1 and 8 workers"));
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        problems.is_empty() && elapsed < Duration::from_secs(30),
        format!("3 tasks x (2 runs at 1 worker + 1 run at 8), {:.2}s{}", elapsed.as_secs_f64(), listing(&problems)),
    )
}

fn pass_through_fidelity() -> Verdict {
    let unreachable = ["--epsilon", "1.5"];
    let mut problems = Vec::new();
    let mut originals: Vec<(String, String, String)> = Vec::new();
    for task in ["stereoset", "winobias", "bold"] {
        let dir = tempfile::tempdir().unwrap();
        if let Err(e) = eval_run(task, dir.path(), 4, &unreachable) {
            problems.push(e);
            continue;
        }
        let text = std::fs::read_to_string(dir.path().join(format!("{task}.json"))).unwrap();
        let report: serde_json::Value = serde_json::from_str(&text).unwrap();
        for row in report["per_instance"].as_array().unwrap() {
            let id = row["id"].as_str().unwrap_or("?");
            if row["passed_through"] != true || !row["rewritten"].is_null() || row["before"] != row["after"] {
                problems.push(format!("{task} row {id} was rewritten"));
            }
            let before: Vec<_> = row["scores"].as_object().into_iter().flatten().filter(|(k, _)| k.ends_with("_before")).collect();
            for (k, v) in before {
                if row["scores"][k.replace("_before", "_after")] != *v {
                    problems.push(format!("{task} row {id}: {k} changed"));
                }
            }
            originals.push((
                row["prompt"].as_str().unwrap().to_string(),
                row["attribute"].as_str().unwrap().to_string(),
                row["original"].as_str().unwrap().to_string(),
            ));
        }
    }

    let detection = DetectionConfig::with_epsilon(1.5);
    let fixture = Pipeline {
        lexicon: Arc::new(load_lexicon(&fixtures().join("lexicon.json")).unwrap()),
        detection,
        embedder: Arc::new(FixtureEmbedder::open(&fixtures().join("embeddings.jsonl")).unwrap()),
        llm: Arc::new(RuleChat::open(&fixtures().join("chat_rules.json")).unwrap()),
        templates: Templates::default(),
        instructions: RoleInstructions::default(),
        recheck: false,
    };
    let mut checked = 0usize;
    for (prompt, attribute, original) in &originals {
        let req = DebiasRequest { prompt, attribute, mode: TaskMode::ChatRewrite, options: None };
        match fixture.debias_response(&req, original.clone()) {
            Ok(out) if out.effective().as_bytes() == original.as_bytes() && out.passed_through => checked += 1,
            Ok(_) => problems.push(format!("output differs from original for {prompt:?}")),
            Err(e) => problems.push(e.to_string()),
        }
    }

    let synthetic = Pipeline {
        embedder: Arc::new(SyntheticEmbedder::new("fixture-embedder", 128, 11)),
        llm: Arc::new(EchoChat),
        ..fixture
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet: Vec<char> = "abcdefghijklmnopqrstuvwxyz ,.'!?éü漢\t".chars().collect();
    for i in 0..1_000 {
        let n = rng.random_range(1..=80);
        let mut prompt: String = (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        prompt.insert(0, 'x');
        let attribute = ["gender", "race", "profession"][i % 3];
        let req = DebiasRequest { prompt: &prompt, attribute, mode: TaskMode::ChatRewrite, options: None };
        match synthetic.debias(&req) {
            Ok(out) if out.effective().as_bytes() == out.original.as_bytes() && out.passed_through => checked += 1,
            Ok(_) => problems.push(format!("output differs from original for {prompt:?}")),
            Err(e) => problems.push(e.to_string()),
        }
    }
    verdict(
        problems.is_empty() && checked == originals.len() + 1_000,
        format!("{checked} outputs byte-identical to originals ({} fixture rows, 1000 random){}", originals.len(), listing(&problems)),
    )
}

fn listing(items: &[String]) -> String {
    if items.is_empty() {
        String::new()
    } else {
        let shown: Vec<&str> = items.iter().take(5).map(String::as_str).collect();
        format!("; {}", shown.join("; "))
    }
}

fn main() {
    let suites: [(&str, fn() -> Verdict); 8] = [
        ("orthogonality", orthogonality),
        ("scale invariance", scale_invariance),
        ("argmax oracle", argmax_oracle),
        ("stereoset table arithmetic", stereoset_table),
        ("winobias fixture consistency", winobias_consistency),
        ("metric unit checks", metric_units),
        ("hermetic end-to-end", hermetic_e2e),
        ("pass-through fidelity", pass_through_fidelity),
    ];
    let mut failed = 0;
    for (name, run) in suites {
        let v = run();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", suites.len() - failed, suites.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
