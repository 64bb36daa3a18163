"""
Command-line entry point for the streaming rumour detector

    python main.py <command> [--config FILE] [--set KEY=VALUE ...] [options]

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""

import argparse
import logging
import sys
import threading
import time
from contextlib import contextmanager
from typing import List, Optional, Sequence, TextIO

from config import Config, RunConfig
from app.models.errors import ConfigError, DataError, RumourError
from app.models.feature_manifest import FeatureManifest
from app.models.records import RUMOUR, Message
from app.models.rumour_model import Model, export_weights_csv, load_model, save_model
from app.services.detection_service import DetectionPipeline, write_verdicts
from app.services.evaluation_service import (Experiment, ablate, accuracy, accuracy_at_threshold, bench,
                                             det_curve)
from app.services.feature_service import FeatureExtractor
from app.services.novelty_service import TrustedMemory, build_trusted_memory
from app.services.storage_service import MemoryStorage
from app.services.training_service import TrainingOptions, TrainingSet, build_training_set, train_two_rounds
from app.utils.document_processor import DocumentProcessor
from app.utils.lexicons import LexiconPack
from app.utils.synthetic import SyntheticCorpusGenerator, SyntheticSpec, write_corpus
from app.utils.text_stats import average_message_length, build_vocabulary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

# Command metrics
cli_metrics = {
    'runs': 0,
    'errors': {
        'config_errors': 0,
        'data_errors': 0,
    }
}
metrics_lock = threading.Lock()


def get_cli_metrics() -> dict:
    """Snapshot of run and error counters"""
    with metrics_lock:
        return {'runs': cli_metrics['runs'], 'errors': dict(cli_metrics['errors'])}


@contextmanager
def error_handling(error_type: str):
    """Context manager for consistent error handling and metrics"""
    try:
        yield
    except Exception as e:
        with metrics_lock:
            cli_metrics['errors'][error_type] = cli_metrics['errors'].get(error_type, 0) + 1
        logger.error(f"{error_type}: {str(e)}")
        raise


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1"""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# -- shared plumbing -------------------------------------------------------

def _open_output(path: str) -> TextIO:
    if path == '-':
        return sys.stdout
    return open(path, 'w', encoding='utf-8', newline='')


def _write_text(path: str, text: str):
    handle = _open_output(path)
    try:
        handle.write(text)
    finally:
        if handle is not sys.stdout:
            handle.close()


def _load_assets(cfg: RunConfig):
    return FeatureManifest.load(cfg.manifest_path), LexiconPack.load(cfg.lexicon_dir)


def _load_memory(cfg: RunConfig, path: str) -> TrustedMemory:
    memory = MemoryStorage().load(path)
    if memory.tokenizer != cfg.tokenizer:
        logger.warning(f"Memory was built with tokenizer '{memory.tokenizer}'; "
                       f"using it instead of the configured '{cfg.tokenizer}'")
    return memory


def _read_stream(path: str, scheme: str, strict_order: bool) -> List[Message]:
    stream = DocumentProcessor(scheme).open_stream(path, strict_order=strict_order)
    messages = list(stream)
    logger.info(f"Read {len(messages)} messages from {path} {stream.summary}")
    return messages


def _extract_all(extractor: FeatureExtractor, messages: Sequence[Message], on_error: str):
    items = []
    for msg in messages:
        try:
            items.append(extractor.extract(msg))
        except DataError as e:
            if on_error == 'abort':
                raise
            logger.warning(f"Skipping training message '{msg.id}': {e}")
    return items


def _training_options(cfg: RunConfig, memory: TrustedMemory) -> TrainingOptions:
    threshold = None if cfg.pf_threshold == 'theta1' else cfg.resolve_pf_threshold(0.0)
    return TrainingOptions(
        c=cfg.svm_c, seed=cfg.svm_seed, max_iter=cfg.svm_max_iter,
        pf_capacity=cfg.pf_capacity, pf_threshold=threshold, joint_round2=cfg.joint_round2,
        settings={
            'novelty_mode': cfg.novelty_mode,
            'keyword_idf_source': cfg.keyword_idf_source,
            'joint_round2': cfg.joint_round2,
            'tokenizer': memory.tokenizer,
        },
    )


def _training_extractor(cfg: RunConfig, memory: TrustedMemory, messages: Sequence[Message],
                        manifest: FeatureManifest, lexicons: LexiconPack) -> FeatureExtractor:
    keyword_vocab = None
    if cfg.keyword_idf_source == 'stream':
        processor = DocumentProcessor(memory.tokenizer)
        keyword_vocab = build_vocabulary([processor.tokenize_message(msg) for msg in messages])
    return FeatureExtractor(memory, lexicons, manifest, cfg.novelty_mode, keyword_vocab)


def _training_set(cfg: RunConfig, extractor: FeatureExtractor, messages: Sequence[Message]) -> TrainingSet:
    return build_training_set(extractor, _extract_all(extractor, messages, cfg.on_error))


def _detection_extractor(cfg: RunConfig, memory: TrustedMemory, model: Model, manifest: FeatureManifest,
                         lexicons: LexiconPack) -> FeatureExtractor:
    mode = model.settings.get('novelty_mode', 'kterm')
    if mode != cfg.novelty_mode:
        logger.warning(f"Model was trained with novelty mode '{mode}'; using it instead of '{cfg.novelty_mode}'")
    return FeatureExtractor(memory, lexicons, manifest, mode, model.keyword_vocab)


def _pipeline(cfg: RunConfig, model: Model, extractor: FeatureExtractor) -> DetectionPipeline:
    return DetectionPipeline(model, extractor, on_error=cfg.on_error, accumulate_stream=cfg.accumulate_stream,
                             debug=cfg.debug, workers=cfg.workers)


def _echo_config(cfg: RunConfig):
    # stderr, so reports and verdicts on stdout stay machine-readable
    sys.stderr.write("# effective configuration\n")
    sys.stderr.write(cfg.to_text())
    sys.stderr.flush()


# -- commands --------------------------------------------------------------

def cmd_build_memory(cfg: RunConfig, args) -> int:
    processor = DocumentProcessor(cfg.tokenizer)
    articles = processor.load_news_corpus(args.news)
    if not articles:
        raise DataError(f"News corpus {args.news} is empty")
    corpus = [processor.tokenize_article(article) for article in articles]

    window_length = cfg.window_length
    if window_length is None:
        if not args.stream:
            raise ConfigError("RUMOUR_WINDOW_LENGTH=auto needs --stream to measure the average message length")
        messages = _read_stream(args.stream, cfg.tokenizer, strict_order=False)
        window_length = average_message_length([processor.tokenize_message(msg) for msg in messages])
        logger.info(f"Window length auto-sized to {window_length} terms")

    memory = build_trusted_memory(corpus, cfg.tokenizer, cfg.bloom_bits, cfg.bloom_hashes, cfg.bloom_seeds,
                                  window_length, cfg.stride, cfg.keep_top_terms, cfg.kterm_scope,
                                  cfg.kterm_stride)
    MemoryStorage().save(memory, args.out)
    logger.info(f"Memory stats {memory.get_memory_stats()}; ingest stats {processor.get_processing_stats()}")

    for k, count in sorted(memory.kterms.inserted_counts().items()):
        print(f"inserted_k{k}={count}")
    print(f"vocabulary_size={memory.vocab.size}")
    print(f"subdocuments={len(memory.index)}")
    print(f"window_length={window_length}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    manifest, lexicons = _load_assets(cfg)
    memory = _load_memory(cfg, args.memory)
    messages = _read_stream(args.stream, memory.tokenizer, args.strict_order)

    extractor = _training_extractor(cfg, memory, messages, manifest, lexicons)
    training = _training_set(cfg, extractor, messages)
    keyword_vocab = extractor.keyword_vocab if cfg.keyword_idf_source == 'stream' else None
    model, report = train_two_rounds(training, _training_options(cfg, memory), keyword_vocab)
    save_model(model, args.model_out)
    if args.export_weights:
        _write_text(args.export_weights, export_weights_csv(model, manifest))

    for line in report.to_lines():
        print(line)
    return EXIT_OK


def _detect_messages(cfg: RunConfig, args):
    manifest, lexicons = _load_assets(cfg)
    memory = _load_memory(cfg, args.memory)
    model = load_model(args.model, manifest.manifest_hash)
    extractor = _detection_extractor(cfg, memory, model, manifest, lexicons)
    pipeline = _pipeline(cfg, model, extractor)
    logger.debug(f"Extractor stats {extractor.get_extractor_stats()}")
    stream = DocumentProcessor(memory.tokenizer).open_stream(args.stream, strict_order=args.strict_order)
    return model, pipeline, stream


def cmd_detect(cfg: RunConfig, args) -> int:
    _, pipeline, stream = _detect_messages(cfg, args)
    handle = _open_output(args.out)
    try:
        count = write_verdicts(pipeline.run(stream), handle, debug=cfg.debug)
    finally:
        if handle is not sys.stdout:
            handle.close()

    stats = pipeline.get_service_stats()
    logger.info(f"Stream summary {stream.summary}; detection stats {stats}")
    if args.out != '-':
        print(f"verdicts={count}")
        print(f"skipped={stats['skipped']}")
        print(f"rumours={stats['rumours']}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model, pipeline, stream = _detect_messages(cfg, args)
    verdicts = list(pipeline.run(stream))
    if args.verdicts_out:
        handle = _open_output(args.verdicts_out)
        try:
            write_verdicts(verdicts, handle, debug=cfg.debug)
        finally:
            if handle is not sys.stdout:
                handle.close()

    run_accuracy = accuracy(verdicts)
    scores = [verdict.rumour_score for verdict in verdicts]
    gold = [verdict.gold_label == RUMOUR for verdict in verdicts]
    at_theta = accuracy_at_threshold(scores, gold, model.theta)
    curve = det_curve(scores, gold, args.num_thresholds)
    if args.det_out:
        _write_text(args.det_out, curve.to_csv())

    print(f"accuracy={run_accuracy:.6f}")
    print(f"accuracy_at_theta={at_theta:.6f}")
    print(f"theta={model.theta:.6f}")
    print(f"equal_error_rate={curve.equal_error_rate():.6f}")
    print(f"det_points={len(curve)}")
    if at_theta != run_accuracy:
        logger.warning("Accuracy at theta differs from the detection run's accuracy")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    manifest, lexicons = _load_assets(cfg)
    memory = _load_memory(cfg, args.memory)
    train_messages = _read_stream(args.train, memory.tokenizer, args.strict_order)
    test_messages = _read_stream(args.test, memory.tokenizer, args.strict_order)

    extractor = _training_extractor(cfg, memory, train_messages, manifest, lexicons)
    training = _training_set(cfg, extractor, train_messages)
    options = _training_options(cfg, memory)
    experiment = Experiment(extractor, training, test_messages, options)

    groups = manifest.categories if args.groups is None else args.groups
    report = ablate(experiment, manifest, groups)
    _write_text(args.out, report.to_csv())
    if args.out != '-':
        sys.stdout.write(report.to_csv())
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args) -> int:
    manifest, lexicons = _load_assets(cfg)
    memory = _load_memory(cfg, args.memory)
    model = load_model(args.model, manifest.manifest_hash)
    extractor = _detection_extractor(cfg, memory, model, manifest, lexicons)
    processor = DocumentProcessor(memory.tokenizer)

    if args.stream:
        messages = _read_stream(args.stream, memory.tokenizer, strict_order=False)[:args.n]
    else:
        if not args.news:
            raise ConfigError("bench needs --stream or --news to draw messages from")
        news = processor.load_news_corpus(args.news)
        generator = SyntheticCorpusGenerator(SyntheticSpec(seed=args.seed))
        messages = list(generator.iter_bench_stream(news, args.n))
    # tokenization is excluded from the timed loop
    docs = [processor.tokenize_message(msg) for msg in messages]

    def factory() -> DetectionPipeline:
        return DetectionPipeline(model, extractor, on_error='skip')

    report = bench(factory, messages, docs, args.batch_size, runs=args.runs, pin_cpu=not args.no_pin)
    if args.out:
        _write_text(args.out, report.to_csv())
    print(f"total_docs={report.total_docs}")
    print(f"docs_per_second={report.docs_per_second:.1f}")
    print(f"mean_latency_us={report.mean_latency_us:.3f}")
    print(f"slope_us_per_batch={report.slope:.6f}")
    print(f"relative_slope={report.relative_slope:.6f}")
    return EXIT_OK


def cmd_gen_synthetic(cfg: RunConfig, args) -> int:
    spec = SyntheticSpec(seed=args.seed, articles=args.articles, messages=args.messages,
                         duplicates=args.duplicates)
    corpus = SyntheticCorpusGenerator(spec).generate()
    for name, path in sorted(write_corpus(corpus, args.out_dir).items()):
        print(f"{name}={path}")
    return EXIT_OK


COMMANDS = {
    'build-memory': cmd_build_memory,
    'train': cmd_train,
    'detect': cmd_detect,
    'evaluate': cmd_evaluate,
    'ablate': cmd_ablate,
    'bench': cmd_bench,
    'gen-synthetic': cmd_gen_synthetic,
}


def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument('--config', help="dotenv-style RUMOUR_* run configuration file")
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help="override one configuration key (repeatable)")

    # --config and --set are per command
    parser = CliParser(prog='rumour-stream', description="Streaming rumour detection against trusted news")
    subparsers = parser.add_subparsers(dest='command', parser_class=CliParser)

    def add(name: str, help_text: str) -> CliParser:
        return subparsers.add_parser(name, help=help_text, parents=[common])

    def strict(sub: CliParser):
        sub.add_argument('--strict-order', action=argparse.BooleanOptionalAction, default=True,
                         help="abort on timestamp decreases (default) or only count them")

    build_p = add('build-memory', "Build the trusted memory file from a news corpus")
    build_p.add_argument('--news', required=True)
    build_p.add_argument('--out', required=True)
    build_p.add_argument('--stream', help="message stream used when window length is 'auto'")

    train_p = add('train', "Two-round training on a labelled stream")
    train_p.add_argument('--memory', required=True)
    train_p.add_argument('--stream', required=True)
    train_p.add_argument('--model-out', required=True)
    train_p.add_argument('--export-weights', help="write name,category,weight CSV")
    strict(train_p)

    detect_p = add('detect', "Score a stream and write verdicts")
    detect_p.add_argument('--memory', required=True)
    detect_p.add_argument('--model', required=True)
    detect_p.add_argument('--stream', required=True)
    detect_p.add_argument('--out', default='-')
    strict(detect_p)

    eval_p = add('evaluate', "Accuracy and DET curve on a labelled stream")
    eval_p.add_argument('--memory', required=True)
    eval_p.add_argument('--model', required=True)
    eval_p.add_argument('--stream', required=True)
    eval_p.add_argument('--det-out')
    eval_p.add_argument('--verdicts-out')
    eval_p.add_argument('--num-thresholds', type=int)
    strict(eval_p)

    ablate_p = add('ablate', "Retrain and evaluate with feature groups removed")
    ablate_p.add_argument('--memory', required=True)
    ablate_p.add_argument('--train', required=True)
    ablate_p.add_argument('--test', required=True)
    ablate_p.add_argument('--groups', nargs='*', help="manifest categories; join with '+' to remove together")
    ablate_p.add_argument('--out', default='-')
    strict(ablate_p)

    bench_p = add('bench', "Measure single-threaded scoring throughput")
    bench_p.add_argument('--memory', required=True)
    bench_p.add_argument('--model', required=True)
    bench_p.add_argument('--stream')
    bench_p.add_argument('--news')
    bench_p.add_argument('--n', type=int, default=100_000)
    bench_p.add_argument('--batch-size', type=int, default=10_000)
    bench_p.add_argument('--runs', type=int, default=5)
    bench_p.add_argument('--seed', type=int, default=11)
    bench_p.add_argument('--no-pin', action='store_true', help="do not pin the process to one CPU")
    bench_p.add_argument('--out')

    gen_p = add('gen-synthetic', "Write the seeded synthetic corpus")
    gen_p.add_argument('--out-dir', required=True)
    gen_p.add_argument('--seed', type=int, default=7)
    gen_p.add_argument('--articles', type=int, default=200)
    gen_p.add_argument('--messages', type=int, default=400)
    gen_p.add_argument('--duplicates', action='store_true', help="inject echo rumours")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    Config.setup_logging()

    try:
        with error_handling('config_errors'):
            Config.validate_config()
            args = build_parser().parse_args(argv)
            if not args.command:
                raise ConfigError("a command is required: " + ', '.join(COMMANDS))
            cfg = RunConfig.load(args.config, args.overrides)
            cfg.validate(check_paths=args.command != 'gen-synthetic')
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    _echo_config(cfg)
    logger.info(f"Running {args.command}")
    with metrics_lock:
        cli_metrics['runs'] += 1
    started = time.perf_counter()
    try:
        with error_handling('data_errors'):
            return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (RumourError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    finally:
        logger.info(f"{args.command} finished in {time.perf_counter() - started:.2f}s; "
                    f"metrics {get_cli_metrics()}")


if __name__ == '__main__':
    sys.exit(main())
