use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use exlens::api::{self, parse_heads, AnalyzeRequest, SearchRequest, SearchResponse};
use exlens::corpus::{build_corpus, parse_conllu, AnnotatedSentence};
use exlens::index::{build_index, SearchKind};
use exlens::model::Model;
use exlens::service::{self, DEFAULT_PORT, INDEX_DIR_ENV};
use exlens::summarize::Explorer;
use exlens::toy::{self, ToyShape};
use exlens::Error;

#[derive(Debug, Parser)]
#[command(
    name = "exlens",
    version,
    about = "Transformer attention and embedding explorer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Token,
    Head,
}

/// Comma-separated indices, parsed as one argument.
type IndexList = Vec<usize>;

fn index_list(s: &str) -> Result<IndexList, String> {
    parse_heads(s)
}

#[derive(Debug, clap::Args)]
struct ModelArgs {
    /// Model directory holding manifest.json and weights.bin.
    #[arg(long)]
    model: PathBuf,
    /// Vocabulary file; defaults to <model>/vocab.txt.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> exlens::Result<Model> {
        Model::load(&self.model, self.vocab.as_deref())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the model over an annotated corpus and write a search index.
    BuildIndex {
        #[command(flatten)]
        model: ModelArgs,
        /// CoNLL-U files.
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = INDEX_DIR_ENV)]
        index: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Allowed CORS origin; any origin when omitted.
        #[arg(long)]
        cors_origin: Option<String>,
    },
    /// One-shot corpus search, printing the same JSON as POST /api/search.
    Search {
        #[arg(long, env = INDEX_DIR_ENV)]
        index: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        sentence: String,
        #[arg(long)]
        position: usize,
        #[arg(long)]
        layer: usize,
        #[arg(long, value_enum, default_value_t = Kind::Token)]
        kind: Kind,
        /// Comma-separated head indices, e.g. 0,3,9. Defaults to all heads.
        #[arg(long, value_parser = index_list)]
        heads: Option<IndexList>,
        /// Comma-separated token positions to mask.
        #[arg(long, value_parser = index_list)]
        mask: Option<IndexList>,
        #[arg(long)]
        k: Option<usize>,
        /// Let [CLS]/[SEP] be max-attention targets.
        #[arg(long)]
        include_specials: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// One-shot analysis, printing the same JSON as POST /api/analyze.
    Analyze {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        sentence: String,
        #[arg(long, value_parser = index_list)]
        mask: Option<IndexList>,
    },
    /// Write a seeded random model whose vocabulary covers the given corpora.
    ToyModel {
        #[arg(long, required = true, num_args = 1..)]
        corpus: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 2)]
        heads: usize,
        #[arg(long, default_value_t = 8)]
        d_head: usize,
        #[arg(long, default_value_t = 128)]
        max_positions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Build the one-layer positional model instead (head 0 attends to
        /// the next token).
        #[arg(long)]
        positional: bool,
    },
}

fn read_corpora(paths: &[PathBuf]) -> exlens::Result<Vec<AnnotatedSentence>> {
    let mut all = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        all.extend(parse_conllu(BufReader::new(file))?);
    }
    Ok(all)
}

fn build(model: &ModelArgs, corpus: &[PathBuf], out: &Path) -> exlens::Result<()> {
    let model = model.load()?;
    let sentences = read_corpora(corpus)?;
    let corpus = build_corpus(sentences, model.vocab(), model.config().max_positions);
    if corpus.num_searchable() == 0 {
        return Err(Error::Build("empty corpus".into()));
    }
    let index = build_index(&corpus, &model)?;
    index.save(out)?;
    corpus.save(out)?;
    for l in 0..index.manifest().num_layers {
        println!("layer {l}: {} rows", index.num_rows());
    }
    println!("sentences={}", corpus.num_sentences());
    println!("N_search={}", index.num_rows());
    Ok(())
}

fn print_table(response: &SearchResponse) {
    let q = &response.query;
    println!(
        "query {:?} @ position {} layer {} kind {:?} heads {:?}",
        q.token, q.position, q.layer, q.kind, q.heads
    );
    println!(
        "{:>4}  {:>9}  {:<16} {:<8} {:<10} {:>6}  context",
        "rank", "sim", "token", "pos", "dep", "offset"
    );
    for d in &response.hits {
        let meta = d.metadata.as_ref();
        let context: Vec<&str> = d
            .context
            .iter()
            .filter(|t| !t.is_special)
            .map(|t| t.token.as_str())
            .collect();
        println!(
            "{:>4}  {:>9.6}  {:<16} {:<8} {:<10} {:>+6}  {}",
            d.hit.rank,
            d.hit.similarity,
            d.token,
            meta.map_or("-", |m| m.upos.as_str()),
            meta.map_or("-", |m| m.deprel.as_str()),
            d.max_attention.offset,
            context.join(" ")
        );
    }
    for (title, hists) in [
        ("matched", &response.summaries.matched),
        ("max attention", &response.summaries.max_attention),
    ] {
        for h in hists.iter() {
            let bars: Vec<String> = h
                .bars
                .iter()
                .map(|b| format!("{}:{}", b.label, b.count))
                .collect();
            println!("{title} {:?} (n={}): {}", h.field, h.total, bars.join(" "));
        }
    }
}

fn run(cli: Cli) -> exlens::Result<()> {
    match cli.command {
        Command::BuildIndex { model, corpus, out } => build(&model, &corpus, &out),
        Command::Serve {
            index,
            model,
            port,
            host,
            cors_origin,
        } => {
            let model = Arc::new(model.load()?);
            let explorer = Arc::new(Explorer::open(&index, model)?);
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
            runtime.block_on(async move {
                let (listener, addr) = service::bind(&host, port)
                    .await
                    .map_err(|e| Error::io(format!("{host}:{port}"), e))?;
                println!("exlens listening on http://{addr}");
                std::io::stdout().flush().ok();
                let router = service::router(explorer, cors_origin.as_deref());
                service::serve(listener, router, async {
                    tokio::signal::ctrl_c().await.ok();
                })
                .await
                .map_err(|e| Error::io("server", e))
            })
        }
        Command::Search {
            index,
            model,
            sentence,
            position,
            layer,
            kind,
            heads,
            mask,
            k,
            include_specials,
            format,
        } => {
            let model = Arc::new(model.load()?);
            let explorer = Explorer::open(&index, model)?;
            let request = SearchRequest {
                sentence,
                mask_positions: mask.unwrap_or_default(),
                position,
                layer,
                kind: match kind {
                    Kind::Token => SearchKind::Token,
                    Kind::Head => SearchKind::Head,
                },
                heads,
                k,
                exclude_specials: !include_specials,
            };
            let response = api::search_request(&explorer, &request)?;
            match format {
                Format::Json => println!("{}", serde_json::to_string(&response)?),
                Format::Table => print_table(&response),
            }
            Ok(())
        }
        Command::Analyze {
            model,
            sentence,
            mask,
        } => {
            let model = model.load()?;
            let request = AnalyzeRequest {
                sentence,
                mask_positions: mask.unwrap_or_default(),
            };
            println!(
                "{}",
                serde_json::to_string(&api::analyze(&model, &request)?)?
            );
            Ok(())
        }
        Command::ToyModel {
            corpus,
            out,
            layers,
            heads,
            d_head,
            max_positions,
            seed,
            positional,
        } => {
            let sentences = read_corpora(&corpus)?;
            let vocab =
                toy::vocab_from_texts(sentences.iter().map(|s| s.raw_text.as_str()), false)?;
            let (config, weights) = if positional {
                toy::positional_model(&vocab, max_positions, seed)
            } else {
                let shape = ToyShape {
                    num_layers: layers,
                    num_heads: heads,
                    d_head,
                    ffn_dim: 4 * heads * d_head,
                    max_positions,
                };
                toy::random_model(&vocab, shape, seed)
            };
            Model::save_dir(&out, &config, &weights, &vocab)?;
            let model = Model::load(&out, None)?;
            println!(
                "wrote {} (vocab {}, fingerprint {})",
                out.display(),
                vocab.len(),
                model.fingerprint()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
