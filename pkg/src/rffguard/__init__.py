"""RF fingerprinting with softmax-threshold rogue detection and GAN-forged attacks."""
