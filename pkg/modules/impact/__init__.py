from .impact_scorer import (METHODS, ImpactScores, average_impact, count_nonpositive,
                            impact_exact, impact_exact_batch, impact_taylor,
                            impact_taylor_batch, score_samples)
from .correlation import compare_methods, cross_domain_correlation, sorted_curve
from .impact_report import (load_impact_report, load_impact_reports, save_impact_report,
                            write_rows_csv, write_sorted_scores_csv)
