from .manifest import MANIFEST_NAME, RunManifest, make_run_id
from .commands import (acceptance_verdicts, cmd_eval, cmd_generate, cmd_impact, cmd_pipeline,
                       cmd_report, format_table, write_seed_summaries)
from .parser import EXIT_CONFIG, EXIT_OK, EXIT_PROTOCOL, EXIT_RUNTIME, build_parser, main
