//! Interactive campaign loop. The engine runs in-process, or on a campaign
//! server reached over HTTP; the terminal side is the same either way.

use std::io::{BufRead, Write};
use std::path::Path;

use activeeval_core::cost::{ChargeKind, CostLedger};
use activeeval_core::engine::Estimates;
use activeeval_core::io::write_json;
use activeeval_core::{CampaignState, Error as CoreError, Strategy, Suggestion};
use activeeval_service::store::CostResponse;
use activeeval_service::{CreateRequest, CreateResponse, OutcomesRequest, OutcomesResponse};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::args::{Cli, LiveArgs};
use crate::commands::{client, load_config, load_spec};
use crate::error::{CliError, CliResult, InputContext, RunContext};

/// Outcomes the backend refused; the user is asked again.
#[derive(Debug)]
pub enum Rejected {
    Invalid(String),
    Fatal(CliError),
}

impl From<CliError> for Rejected {
    fn from(e: CliError) -> Self {
        Rejected::Fatal(e)
    }
}

pub trait Backend {
    fn suggestion(&mut self) -> CliResult<Suggestion>;
    /// Returns the new ledger total.
    fn record(&mut self, suggestion: &Suggestion, outcomes: &[f64]) -> Result<f64, Rejected>;
    fn estimates(&mut self) -> CliResult<Estimates>;
    fn ledger(&mut self) -> CliResult<CostLedger>;
}

pub struct LocalBackend {
    pub state: CampaignState,
}

impl Backend for LocalBackend {
    fn suggestion(&mut self) -> CliResult<Suggestion> {
        self.state.current_suggestion().run()
    }

    fn record(&mut self, suggestion: &Suggestion, outcomes: &[f64]) -> Result<f64, Rejected> {
        // Work on a copy so a rejected batch leaves the campaign untouched.
        let mut next = self.state.clone();
        match next.record_outcomes(suggestion, outcomes) {
            Ok(summary) => {
                self.state = next;
                Ok(summary.total_cost)
            }
            Err(e @ (CoreError::WrongOutcomeCount { .. } | CoreError::OutOfDomainOutcome { .. })) => {
                Err(Rejected::Invalid(e.to_string()))
            }
            Err(e) => Err(Rejected::Fatal(CliError::runtime(e))),
        }
    }

    fn estimates(&mut self) -> CliResult<Estimates> {
        self.state.estimates().run()
    }

    fn ledger(&mut self) -> CliResult<CostLedger> {
        Ok(self.state.ledger().clone())
    }
}

pub struct RemoteBackend {
    agent: ureq::Agent,
    base: String,
    pub campaign: String,
}

fn http_err(e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("campaign server: {e}"))
}

impl RemoteBackend {
    pub fn new(base: &str, campaign: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            agent,
            base: base.trim_end_matches('/').to_owned(),
            campaign: campaign.unwrap_or_default(),
        }
    }

    fn url(&self, tail: &str) -> String {
        format!("{}/campaigns/{}{tail}", self.base, self.campaign)
    }

    fn read(resp: ureq::http::Response<ureq::Body>) -> CliResult<(u16, Value)> {
        let status = resp.status().as_u16();
        let mut resp = resp;
        let body: Value = resp.body_mut().read_json().map_err(http_err)?;
        Ok((status, body))
    }

    fn get(&self, tail: &str) -> CliResult<(u16, Value)> {
        Self::read(self.agent.get(&self.url(tail)).call().map_err(http_err)?)
    }

    fn ok<T: DeserializeOwned>((status, body): (u16, Value)) -> CliResult<T> {
        if status >= 300 {
            return Err(http_err(format!("{status}: {}", body["message"].as_str().unwrap_or("request failed"))));
        }
        serde_json::from_value(body).map_err(http_err)
    }

    /// Creates a campaign and remembers its id.
    pub fn create(&mut self, request: &CreateRequest) -> CliResult<CreateResponse> {
        let resp = self
            .agent
            .post(&format!("{}/campaigns", self.base))
            .send_json(request)
            .map_err(http_err)?;
        let created: CreateResponse = Self::ok(Self::read(resp)?)?;
        self.campaign = created.id.clone();
        Ok(created)
    }
}

impl Backend for RemoteBackend {
    fn suggestion(&mut self) -> CliResult<Suggestion> {
        let (status, body) = self.get("/next")?;
        if status == 409 && body["error"] == "PendingOutcomes" {
            return serde_json::from_value(body["suggestion"].clone()).map_err(http_err);
        }
        Self::ok((status, body))
    }

    fn record(&mut self, suggestion: &Suggestion, outcomes: &[f64]) -> Result<f64, Rejected> {
        let request = OutcomesRequest {
            token: suggestion.token.clone(),
            outcomes: outcomes.to_vec(),
        };
        let resp = self.agent.post(&self.url("/outcomes")).send_json(&request).map_err(http_err)?;
        let (status, body) = Self::read(resp)?;
        match status {
            422 | 409 => Err(Rejected::Invalid(body["message"].as_str().unwrap_or("rejected").to_owned())),
            _ => Ok(Self::ok::<OutcomesResponse>((status, body))?.new_total_cost),
        }
    }

    fn estimates(&mut self) -> CliResult<Estimates> {
        Self::ok(self.get("/estimates")?)
    }

    fn ledger(&mut self) -> CliResult<CostLedger> {
        let cost: CostResponse = Self::ok(self.get("/cost")?)?;
        let mut ledger = CostLedger::new();
        for entry in cost.entries {
            ledger.charge(entry).run()?;
        }
        Ok(ledger)
    }
}

enum Line {
    Outcomes(Vec<f64>),
    Status,
    Quit,
}

fn parse_line(line: &str) -> Result<Option<Line>, String> {
    let line = line.trim();
    match line.to_ascii_lowercase().as_str() {
        "" => return Ok(None),
        "status" | "s" => return Ok(Some(Line::Status)),
        "quit" | "q" | "exit" => return Ok(Some(Line::Quit)),
        _ => {}
    }
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("could not read '{t}' as a number")))
        .collect::<Result<Vec<_>, _>>()
        .map(|v| Some(Line::Outcomes(v)))
}

fn describe(s: &Suggestion, est: &Estimates) -> String {
    let task = &est.tasks[s.task];
    let policies: Vec<&str> = s.trials.iter().map(|t| est.policies[t.policy].as_str()).collect();
    let head = if s.warm_start {
        format!("warm start on task '{task}'")
    } else {
        format!("step {} ({}): task '{task}'", s.step, s.strategy)
    };
    format!(
        "{head}\nrun {} trials in this order: {}\nenter {} outcomes separated by spaces or commas, 'status' or 'quit'",
        s.trials.len(),
        policies.join(", "),
        s.trials.len()
    )
}

fn status(backend: &mut dyn Backend, out: &mut dyn Write) -> CliResult<()> {
    let est = backend.estimates()?;
    let ledger = backend.ledger()?;
    writeln!(
        out,
        "step {}, total cost {:.2} (eval {:.2}, switch {:.2}), current task '{}'",
        est.step,
        ledger.total(),
        ledger.sum_of(ChargeKind::Eval),
        ledger.sum_of(ChargeKind::Switch),
        est.tasks[est.current_task]
    )
    .run()?;
    let mut cells: Vec<_> = est.cells.iter().collect();
    cells.sort_by(|a, b| b.eig.total_cmp(&a.eig));
    writeln!(out, "highest expected information gain:").run()?;
    for c in cells.iter().take(5) {
        writeln!(
            out,
            "  {} on '{}': eig {:.4}, mean {:.3}, {} trials",
            est.policies[c.policy], est.tasks[c.task], c.eig, c.mean, c.trial_count
        )
        .run()?;
    }
    Ok(())
}

fn flush(backend: &mut dyn Backend, out_dir: &Path, out: &mut dyn Write) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::runtime(format!("{}: {e}", out_dir.display())))?;
    backend.ledger()?.save_csv(&out_dir.join("ledger.csv")).run()?;
    write_json(&out_dir.join("estimates.json"), &backend.estimates()?).run()?;
    writeln!(out, "wrote {} and {}", out_dir.join("ledger.csv").display(), out_dir.join("estimates.json").display()).run()
}

/// Reads commands until `quit` or end of input, then writes the ledger and
/// estimates to `out_dir`.
pub fn session(backend: &mut dyn Backend, input: &mut dyn BufRead, out: &mut dyn Write, out_dir: &Path) -> CliResult<()> {
    let mut pending: Option<Suggestion> = None;
    let mut names: Option<Estimates> = None;
    loop {
        let suggestion = match &pending {
            Some(s) => s.clone(),
            None => {
                let s = backend.suggestion()?;
                let est = match names.take() {
                    Some(e) => e,
                    None => backend.estimates()?,
                };
                writeln!(out, "{}", describe(&s, &est)).run()?;
                names = Some(est);
                pending = Some(s.clone());
                s
            }
        };
        write!(out, "> ").run()?;
        out.flush().run()?;
        let mut line = String::new();
        if input.read_line(&mut line).run()? == 0 {
            writeln!(out).run()?;
            return flush(backend, out_dir, out);
        }
        match parse_line(&line) {
            Ok(None) => {}
            Ok(Some(Line::Quit)) => return flush(backend, out_dir, out),
            Ok(Some(Line::Status)) => status(backend, out)?,
            Ok(Some(Line::Outcomes(v))) => match backend.record(&suggestion, &v) {
                Ok(total) => {
                    writeln!(out, "recorded; total cost {total:.2}").run()?;
                    pending = None;
                }
                Err(Rejected::Invalid(msg)) => {
                    writeln!(out, "rejected: {msg}").run()?;
                    // A stale token means someone else advanced the campaign.
                    pending = None;
                }
                Err(Rejected::Fatal(e)) => return Err(e),
            },
            Err(msg) => writeln!(out, "{msg}").run()?,
        }
    }
}

pub fn run(cli: &Cli, args: &LiveArgs) -> CliResult<()> {
    let mut config = load_config(cli, args.representation.as_deref())?;
    if let Some(s) = &args.strategy {
        config.acquisition.strategy = s.parse::<Strategy>().input()?;
    }
    let stdin = std::io::stdin();
    let mut input = stdin.lock();
    let mut stdout = std::io::stdout();
    match (&args.server, &args.spec) {
        (Some(server), spec) => {
            let mut backend = RemoteBackend::new(server, args.campaign.clone());
            if args.campaign.is_none() {
                let Some(path) = spec else {
                    return Err(CliError::config("--server needs --campaign or --spec"));
                };
                let created = backend.create(&CreateRequest {
                    spec: load_spec(path)?,
                    config,
                })?;
                println!("created campaign {}", created.id);
            }
            session(&mut backend, &mut input, &mut stdout, &cli.out_dir)
        }
        (None, Some(path)) => {
            let spec = load_spec(path)?;
            let client = client(args.embedding_endpoint.as_deref(), None);
            let resolved = spec.resolve(&config, client.as_ref()).input()?;
            let config = resolved.campaign_config(&config);
            let state = CampaignState::new(resolved.policies, resolved.tasks, resolved.outcome_kind, &config).input()?;
            session(&mut LocalBackend { state }, &mut input, &mut stdout, &cli.out_dir)
        }
        (None, None) => Err(CliError::config("live needs --spec or --server")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use activeeval_core::synthetic::{generate, SyntheticConfig};
    use activeeval_core::CampaignConfig;

    fn backend() -> LocalBackend {
        let spec = generate(&SyntheticConfig {
            num_policies: 3,
            num_tasks: 4,
            num_clusters: 2,
            raw_dim: 8,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let mut config = CampaignConfig::default();
        config.seed = 3;
        config.surrogate.hidden_sizes = vec![8, 8];
        config.surrogate.epochs_initial = 5;
        config.surrogate.epochs_per_update = 2;
        config.embedding.target_dim = 4;
        config.embedding.policy_dim = 4;
        let resolved = spec.resolve(&config, None).unwrap();
        let config = resolved.campaign_config(&config);
        LocalBackend {
            state: CampaignState::new(resolved.policies, resolved.tasks, resolved.outcome_kind, &config).unwrap(),
        }
    }

    fn drive(script: &str) -> (LocalBackend, String, tempfile::TempDir) {
        let mut b = backend();
        let dir = tempfile::tempdir().unwrap();
        let mut out = Vec::new();
        session(&mut b, &mut script.as_bytes(), &mut out, dir.path()).unwrap();
        (b, String::from_utf8(out).unwrap(), dir)
    }

    #[test]
    fn warm_start_then_one_step_then_quit() {
        // Warm start: 3 policies x 3 trials on one task.
        let warm = vec!["0.5"; 9].join(" ");
        let (b, out, dir) = drive(&format!("{warm}\n0.1, 0.2, 0.3\nquit\n"));
        assert_eq!(out.matches("recorded; total cost").count(), 2, "{out}");
        assert!(out.contains("warm start on task"));
        assert_eq!(b.state.step(), 1);
        assert!(dir.path().join("ledger.csv").is_file());
        let est: Estimates = activeeval_core::io::read_json(&dir.path().join("estimates.json")).unwrap();
        assert_eq!(est.step, 1);
        assert_eq!(est.cells.len(), 12);
    }

    #[test]
    fn bad_input_reprompts_without_changing_the_campaign() {
        let (b, out, _dir) = drive("abc\n1 2\n2 2 2 2 2 2 2 2 2\nstatus\nq\n");
        assert!(out.contains("could not read 'abc'"));
        assert_eq!(out.matches("rejected:").count(), 2, "{out}");
        assert!(out.contains("expected 9 outcomes, got 2"));
        assert!(out.contains("outside the continuous domain") || out.contains("domain"));
        assert!(!b.state.is_warm_started());
        assert!(out.contains("highest expected information gain"));
        assert!(b.state.ledger().entries().is_empty());
    }

    #[test]
    fn end_of_input_flushes() {
        let (_, out, dir) = drive("");
        assert!(out.contains("wrote"));
        assert!(dir.path().join("estimates.json").is_file());
    }
}
