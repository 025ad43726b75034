"""
Numerical settings engine for the Boutroux toolkit.
Applies context-aware rules to the default tolerances based on the curve being processed,
then applies explicit user overrides (config file / CLI flags), which always win.
"""
import logging

logger = logging.getLogger(__name__)

# Baseline knobs. Values are the documented defaults of every stage.
DEFAULT_SETTINGS = {
    # polygon
    'root_cluster_tolerance': 1e-6,  # zeros of P_d / discriminant clustering (relative)
    'reconstruction_tolerance': 1e-8,  # terms dropped from a rebuilt exterior (relative)
    # curve
    'residue_nodes': 256,
    'residue_agreement': 1e-11,
    'max_residue_doublings': 5,
    'truncation_extra': 8,           # K = r + truncation_extra
    'classification_radius_ratio': 1e-4,
    'continuation_step_cap': 0.25,   # relative to distance to nearest critical x
    'path_margin': 1e-9,
    'basepoint_seed': 20240611,
    # periods
    'merge_tolerance': 1e-7,
    'contour_inflation': 0.2,
    'gauss_order': 16,
    'period_tolerance': 1e-10,
    'max_gauss_doublings': 4,
    'normalization_condition': 1e12,
    # energy
    'area_tolerance': 1e-9,
    'area_radial_nodes': 48,
    'area_angular_nodes': 128,
    'max_area_doublings': 4,
    # solver
    'max_iterations': 60,
    'zeta_tolerance': 1e-10,
    'line_search_floor': 1e-4,
    'real_residue_tolerance': 1e-9,
    'residue_sum_tolerance': 1e-9,
    'damping': 1.0,                  # first line-search step
    'multi_start': 1,                # extra seeded starts when > 1
    'continuation_steps': 0,         # exterior homotopy stages, 0 = off
    # network
    'trace_tolerance': 1e-7,
    'snap_factor': 10.0,
    'seed_radius_ratio': 1e-4,
    'closure_position': 1e-6,
    'closure_angle': 1e-3,
    'trace_budget': 400.0,
    'trace_rtol': 1e-11,
    # apps
    'measure_nodes': 512,            # cosine nodes per support arc
}


def get_active_settings(overrides=None, context=None):
    """
    Get active numerical settings for a curve

    Args:
        overrides (dict, optional): Explicit user values (config file or CLI flags)
        context (dict, optional): Curve context from detect_context

    Returns:
        dict: Active settings with adaptation rules applied
    """
    settings = dict(DEFAULT_SETTINGS)
    settings['adaptation_reasons'] = []

    if context is None:
        context = {
            'degree_y': 2,
            'coefficient_spread': 1.0,
            'min_critical_distance': 1.0,
            'finite_punctures': False,
        }

    # Rule 1: Coefficient Scale Rule
    # Huge spread between coefficients makes root clusters fuzzy
    spread = context.get('coefficient_spread', 1.0)
    if spread > 1e8:
        settings['root_cluster_tolerance'] *= 10
        settings['adaptation_reasons'].append(f'coefficients span {spread:.1e}')

    # Rule 2: Near-Collision Rule
    # Critical points closer than 1e-3 need finer quadrature everywhere
    separation = context.get('min_critical_distance', 1.0)
    if separation < 1e-3:
        settings['residue_nodes'] *= 2
        settings['gauss_order'] *= 2
        settings['adaptation_reasons'].append(f'critical points are {separation:.1e} apart')

    # Rule 3: Many Sheets Rule
    # More than two sheets means more roots competing during continuation
    if context.get('degree_y', 2) > 2:
        settings['continuation_step_cap'] /= 2
        settings['adaptation_reasons'].append(f'the curve has {context["degree_y"]} sheets')

    # Rule 4: Finite Puncture Rule
    # Poles over finite x sit close to critical points; shrink the classification discs
    if context.get('finite_punctures'):
        settings['classification_radius_ratio'] /= 10
        settings['adaptation_reasons'].append('punctures lie over finite x')

    for key, value in (overrides or {}).items():
        if key not in DEFAULT_SETTINGS:
            logger.warning("Ignoring unknown setting %r", key)
            continue
        settings[key] = value

    return settings


def get_adaptation_log_message(settings):
    """
    Generate a human-readable message describing which rules fired

    Args:
        settings (dict): Active settings dictionary

    Returns:
        str: Adaptation log message, or None when the defaults were kept
    """
    if not settings.get('adaptation_reasons'):
        return None

    adaptations = []
    if settings['root_cluster_tolerance'] > DEFAULT_SETTINGS['root_cluster_tolerance']:
        adaptations.append("loosening root clustering")
    if settings['gauss_order'] > DEFAULT_SETTINGS['gauss_order']:
        adaptations.append("doubling quadrature orders")
    if settings['continuation_step_cap'] < DEFAULT_SETTINGS['continuation_step_cap']:
        adaptations.append("shortening continuation steps")
    if settings['classification_radius_ratio'] < DEFAULT_SETTINGS['classification_radius_ratio']:
        adaptations.append("shrinking classification discs")

    adaptation_text = " and ".join(adaptations) if adaptations else "keeping explicit overrides"
    reason_text = " and ".join(settings['adaptation_reasons'])
    return f"Settings adapted: {adaptation_text.capitalize()} because {reason_text}."


def detect_context(poly, critical_xs=None):
    """
    Measure the features of a curve the adaptation rules look at

    Args:
        poly (BivariatePolynomial): Input curve
        critical_xs (list, optional): x-values of already known critical points

    Returns:
        dict: Detected context
    """
    magnitudes = [abs(c) for c in poly.terms.values()]
    context = {
        'degree_y': poly.degree_y,
        'coefficient_spread': max(magnitudes) / min(magnitudes) if magnitudes else 1.0,
        'min_critical_distance': 1.0,
        'finite_punctures': len(poly.leading_x_coefficients()) > 1,
    }
    if critical_xs is not None and len(critical_xs) > 1:
        xs = list(critical_xs)
        context['min_critical_distance'] = min(
            abs(a - b) for i, a in enumerate(xs) for b in xs[i + 1:]
        )
    return context
