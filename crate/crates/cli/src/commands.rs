use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;

use qchain::constraints::chain_to_constraints;
use qchain::inference::close as close_scene;
use qchain::kb::{default_kb, load_kb};
use qchain::oracle::Oracle;
use qchain::pipeline::{pipeline as run_pipeline, PipelineConfig};
use qchain::render::{render_chain, render_story, Entities, StoryMode};
use qchain::scenegen::{generate, GenConfig, Record};
use qchain::softlogic::{eval_product, grad_check, ProbAssignment, ViolationForm};
use qchain::spatial::{parse_fact, Answer, Fact, Question, QuestionKind, Scene};
use qchain::trainer::{combined_loss, encode_all, evaluate, train as train_model, Lambdas, TrainConfig};
use qchain::{ConstraintSet, LogicExpr, QChain, RenderFormat, RuleKb, Template, ToyModelF64, YesNo};

use crate::{DataFormat, KbArg, OutArg, TemplateArg, ViolationArg};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn runtime(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: error.into(),
    }
}

type Outcome = Result<(), Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))
        .map_err(usage)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read_text(path)?;
    serde_json::from_str(&text)
        .with_context(|| format!("{} does not match the expected schema", path.display()))
        .map_err(usage)
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, Failure> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{} line {}: schema error", path.display(), i + 1))
                .map_err(usage)
        })
        .collect()
}

fn load_rules(arg: &KbArg) -> Result<RuleKb, Failure> {
    match &arg.kb {
        None => Ok(default_kb()),
        Some(path) => load_kb(path).map_err(usage),
    }
}

fn templates(arg: &TemplateArg) -> BTreeSet<Template> {
    match &arg.include_templates {
        Some(list) => list.iter().copied().collect(),
        None => Template::ALL.into_iter().collect(),
    }
}

fn filter_records(records: &mut [Record], keep: &BTreeSet<Template>) {
    for r in records {
        r.constraints.retain_templates(|t| keep.contains(&t));
    }
}

fn emit(out: &OutArg, text: &str) -> Outcome {
    let mut text = text.to_string();
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    match &out.out {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(runtime),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn target_fact(text: &str) -> Result<Fact, Failure> {
    parse_fact(text)
        .with_context(|| format!("bad target `{text}`"))
        .map_err(usage)
}

pub fn close(scene: &Path, kb: &KbArg, format: DataFormat, out: &OutArg) -> Outcome {
    let scene: Scene = read_json(scene)?;
    let kb = load_rules(kb)?;
    let closure = close_scene(&scene, &kb).map_err(runtime)?;
    let text = match format {
        DataFormat::Json => to_json(&closure.to_json()),
        DataFormat::Text => {
            let mut s = String::new();
            for f in closure.facts() {
                match closure.derivation(f) {
                    None => writeln!(s, "{f}  [given]").unwrap(),
                    Some(d) => {
                        let ps: Vec<String> = d.premises.iter().map(Fact::to_string).collect();
                        writeln!(s, "{f}  [{}: {}]", d.rule, ps.join(", ")).unwrap()
                    }
                }
            }
            s
        }
    };
    emit(out, &text)
}

pub fn answer(scene: &Path, questions: &Path, kb: &KbArg, format: DataFormat, out: &OutArg) -> Outcome {
    let scene: Scene = read_json(scene)?;
    let questions: Vec<Question> = read_json(questions)?;
    let kb = load_rules(kb)?;
    let oracle = Oracle::new(&scene, &kb).map_err(runtime)?;
    let mut text = String::new();
    for q in &questions {
        let a = oracle.answer(q).map_err(usage)?;
        match format {
            DataFormat::Json => writeln!(text, "{}", to_line(&a)).unwrap(),
            DataFormat::Text => {
                let shown = match &a.answer {
                    Answer::Yn(YesNo::Yes) => "yes".to_string(),
                    Answer::Yn(YesNo::No) => "no".to_string(),
                    Answer::Fr(set) if set.is_empty() => "none".to_string(),
                    Answer::Fr(set) => set.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(", "),
                };
                writeln!(text, "{}: {shown}", q.id).unwrap()
            }
        }
    }
    emit(out, &text)
}

fn derive_chain(scene: &Scene, target: &Fact, kb: &RuleKb) -> Result<QChain, Failure> {
    qchain::derive(scene, target, kb)
        .map_err(runtime)?
        .ok_or_else(|| runtime(anyhow!("{target} is not derivable from the scene")))
}

pub fn chain(scene: &Path, target: &str, kb: &KbArg, out: &OutArg) -> Outcome {
    let scene: Scene = read_json(scene)?;
    let target = target_fact(target)?;
    let kb = load_rules(kb)?;
    let chain = derive_chain(&scene, &target, &kb)?;
    emit(out, &to_json(&chain))
}

pub fn constraints(
    input: Option<&Path>,
    scene_target: Option<(&Path, &str)>,
    kb: &KbArg,
    keep: &TemplateArg,
    out: &OutArg,
) -> Outcome {
    let chain: QChain = match (input, scene_target) {
        (Some(path), _) => read_json(path)?,
        (None, Some((scene, target))) => {
            let scene: Scene = read_json(scene)?;
            derive_chain(&scene, &target_fact(target)?, &load_rules(kb)?)?
        }
        (None, None) => return Err(usage(anyhow!("give --input, or --scene with --target"))),
    };
    let mut set = chain_to_constraints(&chain);
    let keep = templates(keep);
    set.retain_templates(|t| keep.contains(&t));
    emit(out, &to_json(&set))
}

pub fn softeval(
    constraints: &Path,
    probs: &Path,
    violation: ViolationArg,
    format: DataFormat,
    out: &OutArg,
) -> Outcome {
    let set: ConstraintSet = read_json(constraints)?;
    let probs: ProbAssignment<f64> = read_json(probs)?;
    let form = match violation {
        ViolationArg::OneMinus => ViolationForm::OneMinus,
        ViolationArg::NegLog => ViolationForm::NegLog,
    };
    let mut text = String::new();
    for c in &set.constraints {
        let r = eval_product(&c.expr, &probs).map_err(usage)?;
        let violation = form.apply(r.value);
        match format {
            DataFormat::Json => {
                let line = serde_json::json!({
                    "id": c.id,
                    "template": c.template,
                    "value": r.value,
                    "violation": violation,
                    "grad": r.grad,
                });
                writeln!(text, "{}", to_line(&line)).unwrap()
            }
            DataFormat::Text => writeln!(
                text,
                "{} {} {}  value={} violation={}",
                c.id, c.template, c.expr, r.value, violation
            )
            .unwrap(),
        }
    }
    emit(out, &text)
}

pub fn gen(config: Option<&Path>, seed: Option<u64>, kb: &KbArg, keep: &TemplateArg, out: &OutArg) -> Outcome {
    let mut cfg: GenConfig = match config {
        Some(path) => read_json(path)?,
        None => GenConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(usage)?;
    let kb = load_rules(kb)?;
    let mut records = generate(&cfg, &kb).map_err(runtime)?;
    filter_records(&mut records, &templates(keep));
    for r in &records {
        for w in &r.warnings {
            eprintln!("warning: {}", to_line(w));
        }
    }
    let text: String = records.iter().map(|r| to_line(r) + "\n").collect();
    emit(out, &text)
}

pub fn render(input: Option<&Path>, scene: Option<&Path>, format: RenderFormat, out: &OutArg) -> Outcome {
    let scene: Option<Scene> = scene.map(read_json).transpose()?;
    let ents = scene.as_ref().map(Entities::of).unwrap_or_else(Entities::none);
    let text = match (input, &scene) {
        (Some(path), _) => {
            let chain: QChain = read_json(path)?;
            render_chain(&chain, ents, format).map_err(usage)?
        }
        (None, Some(scene)) => match format {
            RenderFormat::Nl | RenderFormat::Cot => render_story(scene, StoryMode::StepByStep),
            other => scene
                .facts
                .iter()
                .map(|f| qchain::render_fact(f, ents, other))
                .collect::<Result<Vec<_>, _>>()
                .map_err(usage)?
                .join("\n"),
        },
        (None, None) => return Err(usage(anyhow!("give --input or --scene"))),
    };
    emit(out, &text)
}

pub fn train(
    data: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    keep: &TemplateArg,
    out: &Path,
    report: Option<&Path>,
) -> Outcome {
    let mut records: Vec<Record> = read_jsonl(data)?;
    filter_records(&mut records, &templates(keep));
    let mut cfg: TrainConfig = match config {
        Some(path) => read_json(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(usage)?;
    let (model, rep) = train_model::<f64>(&records, &cfg).map_err(runtime)?;
    emit(
        &OutArg {
            out: Some(out.to_path_buf()),
        },
        &to_json(&model),
    )?;
    if let Some(path) = report {
        emit(
            &OutArg {
                out: Some(path.to_path_buf()),
            },
            &to_json(&rep),
        )?;
    }
    Ok(())
}

pub fn eval(model: &Path, data: &Path, keep: &TemplateArg, out: &OutArg) -> Outcome {
    let model: ToyModelF64 = read_json(model)?;
    let mut records: Vec<Record> = read_jsonl(data)?;
    filter_records(&mut records, &templates(keep));
    let metrics = evaluate(&model, &records).map_err(usage)?;
    emit(out, &to_json(&metrics))
}

pub fn pipeline(
    scene_target: Option<(&Path, &str)>,
    data: Option<&Path>,
    format: RenderFormat,
    kb: &KbArg,
    keep: &TemplateArg,
    out: &OutArg,
) -> Outcome {
    let kb = load_rules(kb)?;
    let cfg = PipelineConfig {
        format,
        templates: templates(keep),
    };
    let jobs: Vec<(Scene, Fact)> = match (scene_target, data) {
        (Some((scene, target)), _) => vec![(read_json(scene)?, target_fact(target)?)],
        (None, Some(path)) => read_jsonl::<Record>(path)?
            .into_iter()
            .filter_map(|r| match r.question.kind {
                QuestionKind::Yn { fact } => Some((r.scene, fact)),
                QuestionKind::Fr { .. } => None,
            })
            .collect(),
        (None, None) => return Err(usage(anyhow!("give --scene with --target, or --data"))),
    };
    let mut text = String::new();
    for (scene, target) in &jobs {
        let rec = run_pipeline(scene, target, &kb, &cfg).map_err(runtime)?;
        if scene_target.is_some() {
            text.push_str(&to_json(&rec));
        } else {
            writeln!(text, "{}", to_line(&rec)).unwrap();
        }
    }
    emit(out, &text)
}

const FIG2_SCENE: &str = r#"{"entities":[{"id":"white"},{"id":"orange"},{"id":"red"}],
"facts":[{"rel":"above","subj":"white","obj":"orange"},{"rel":"above","subj":"red","obj":"white"}]}"#;

fn check(name: &str, ok: bool, failures: &mut Vec<String>) {
    println!("{} {name}", if ok { "ok  " } else { "FAIL" });
    if !ok {
        failures.push(name.to_string());
    }
}

pub fn selftest() -> Outcome {
    let mut failures = Vec::new();
    let kb = default_kb();
    let scene: Scene = serde_json::from_str(FIG2_SCENE).expect("embedded scene");
    let target: Fact = "below(orange,red)".parse().expect("embedded target");
    let rec = run_pipeline(&scene, &target, &kb, &PipelineConfig::default()).map_err(runtime)?;
    check("worked example answers yes", rec.answer == YesNo::Yes, &mut failures);
    let inner: BTreeSet<String> = rec
        .chain
        .iter()
        .flat_map(|c| {
            c.rule_steps()
                .filter(|s| s.fact != target)
                .map(|s| s.fact.to_string())
                .collect::<Vec<_>>()
        })
        .collect();
    let expected: BTreeSet<String> = ["below(orange,white)", "below(white,red)"].map(String::from).into();
    check("worked example intermediate facts", inner == expected, &mut failures);
    let shown: Vec<String> = rec.constraints.constraints.iter().map(|c| c.expr.to_string()).collect();
    check(
        "worked example constraints",
        shown == ["(T(q1) ⇒ T(q3))", "(T(q2) ⇒ T(q4))", "((T(q3) ∧ T(q4)) ⇒ T(t))"],
        &mut failures,
    );
    check(
        "worked example rationale",
        rec.rationale.as_deref().map(|r| r.lines().count()) == Some(4),
        &mut failures,
    );

    let v = LogicExpr::var;
    let exprs = [
        LogicExpr::implies(v("a"), v("b")),
        LogicExpr::implies(LogicExpr::And(vec![v("a"), v("b")]), v("c")),
        LogicExpr::Or(vec![LogicExpr::not(v("a")), v("c")]),
    ];
    let probs: ProbAssignment<f64> = [("a", 0.7), ("b", 0.4), ("c", 0.15)]
        .map(|(k, p)| (k.to_string(), p))
        .into();
    let worst = exprs
        .iter()
        .map(|e| grad_check(e, &probs, 1e-6).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    check("soft logic gradients", worst <= 1e-5, &mut failures);

    let cfg = GenConfig {
        n_entities: 5,
        n_blocks: 2,
        k_target: 3,
        n_scenes: 2,
        questions_per_scene: 2,
        seed: 1,
        ..GenConfig::default()
    };
    let records = generate(&cfg, &kb).map_err(runtime)?;
    let data = encode_all::<f64>(&records, 32, false).map_err(runtime)?;
    let mut worst: f64 = 0.0;
    for (n, ex) in data.iter().enumerate() {
        let mut model = qchain::ToyModel::<f64>::zeros(32, &[ex.head()].into());
        let w: Vec<f64> = (0..model.params().len())
            .map(|i| ((i * 7 + n * 3) % 11) as f64 / 11.0 - 0.45)
            .collect();
        model.set_params(&w);
        let lambda = Lambdas::uniform(1.0);
        let g = combined_loss(&model, ex, &lambda, ViolationForm::OneMinus, true)
            .map_err(runtime)?
            .1
            .expect("gradient");
        let g = g.params();
        for i in (0..w.len()).step_by(5) {
            let mut probe = w.clone();
            let mut at = |x: f64| {
                probe[i] = x;
                model.set_params(&probe);
                combined_loss(&model, ex, &lambda, ViolationForm::OneMinus, false).map(|r| r.0.total())
            };
            let numeric = (at(w[i] + 1e-6).map_err(runtime)? - at(w[i] - 1e-6).map_err(runtime)?) / 2e-6;
            worst = worst.max((g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1.0));
        }
    }
    check("training loss gradients", worst <= 1e-4, &mut failures);

    if failures.is_empty() {
        Ok(())
    } else {
        Err(runtime(anyhow!(
            "{} check(s) failed: {}",
            failures.len(),
            failures.join(", ")
        )))
    }
}
