"""Reference values used by the regression suite and ``sweep --table1``."""

# xi, A, sigma, Gaussian-pulse efficiency, steepest-descent efficiency
TABLE_I = (
    (1.00, 1.11, 1.30, 0.2510, 0.2512),
    (0.95, 1.09, 1.32, 0.2661, 0.2662),
    (0.90, 1.07, 1.34, 0.2824, 0.2825),
    (0.85, 1.05, 1.36, 0.3000, 0.3001),
    (0.80, 1.03, 1.38, 0.3190, 0.3191),
    (0.75, 1.02, 1.39, 0.3396, 0.3397),
    (0.70, 1.00, 1.41, 0.3619, 0.3620),
    (0.65, 0.98, 1.43, 0.3861, 0.3863),
    (0.60, 0.97, 1.44, 0.4124, 0.4126),
    (0.55, 0.96, 1.44, 0.4410, 0.4413),
    (0.50, 0.95, 1.44, 0.4721, 0.4726),
    (0.45, 0.94, 1.45, 0.5060, 0.5067),
    (0.40, 0.93, 1.46, 0.5428, 0.5439),
    (0.35, 0.92, 1.46, 0.5830, 0.5846),
    (0.30, 0.91, 1.46, 0.6270, 0.6292),
    (0.25, 0.90, 1.47, 0.6750, 0.6780),
    (0.20, 0.89, 1.48, 0.7277, 0.7315),
    (0.15, 0.88, 1.48, 0.7855, 0.7900),
    (0.10, 0.85, 1.52, 0.8494, 0.8536),
    (0.05, 0.79, 1.60, 0.9203, 0.9232),
    (0.00, 0.73, 1.71, 0.9999, 1.0000),
)

TABLE_I_XI = tuple(row[0] for row in TABLE_I)

#: CINEPT efficiency at xi = 1 as quoted with the robustness map.
ETA_CI_XI1 = 0.1727

#: Lower edges of the robustness-map bands, brightest first.
BAND_EDGES = (0.24, 0.23, 0.22, 0.21, 0.20, 0.1727)
BAND_LABELS = ("white", "gray1", "gray2", "gray3", "gray4", "gray5", "black")
