# RegVar uncertainty benchmark
