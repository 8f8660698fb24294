# Scene package
