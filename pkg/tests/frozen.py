"""Expected values frozen from hand arithmetic or an independent oracle run."""

SOFTMAX_10_T1 = (0.7310585786300049, 0.2689414213699951)
CAPTURE_BYTES_1992x720 = 11473952
FULL_SCALE_SPLIT = {"train": 9760, "validation": 3386, "test": 6774}
FULL_SCALE_TEST_AFTER_ATTACK = 7774
CNN_SHAPES = [(716, 2, 32), (716, 2, 32), (358, 2, 32), (22912,), (352,), (352,), (7,)]
CNN_DENSE_PARAMS = 22912 * 352 + 352
DISC_SHAPES = [(714, 64), (714, 64), (710, 128), (710, 128), (90880,), (128,), (1,)]
F1_8_2_4 = 16 / 22
FD_1D_UNIT_VS_WIDE = 2.0
